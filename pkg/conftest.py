import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'r3d.settings')
django.setup()
