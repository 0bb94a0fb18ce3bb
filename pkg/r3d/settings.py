import os
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv('R3D_SECRET_KEY', 'r3d-local-cli-only')
DEBUG = False
ALLOWED_HOSTS = []

INSTALLED_APPS = [
    'processing',
]

# CLI-only project: no models, no migrations.
DATABASES = {}

USE_I18N = False
USE_TZ = True
TIME_ZONE = 'UTC'

# Every RunConfig key with its default. A config file or --set flag may only
# override keys listed here.
R3D_DEFAULTS = {
    # noise schedule
    'rho': 7.0,
    'sigma_min': 0.002,
    'sigma_max': 80.0,
    'num_steps': 18,
    # regional guidance
    'lambda_s': 0.5,
    'lambda_c': 0.5,
    'alpha_low': 2.0,
    'beta_low': 1.0,
    'sigma_threshold': 1.0,
    'mask_steepness': 10.0,
    'mask_center': 0.5,
    # denoiser architecture
    'depth': 2,
    'widths': (16, 32, 64),
    'embed_dim': 32,
    # training
    'mode': 'r3d',
    'batch_size': 4,
    'train_steps': 2000,
    'learning_rate': 1e-3,
    'momentum': 0.9,
    'w_max': 1e6,
    'grad_clip': 1.0,
    'log_every': 50,
    # sampling
    'terminal_step': False,
    'record_trajectory': False,
    # synthetic scenes
    'scene': 'indoor',
    'height': 64,
    'width': 64,
    'walls_min': 2,
    'walls_max': 5,
    'boxes_min': 1,
    'boxes_max': 4,
    'dropout': 0.05,
    'angular_blur': 1.0,
    'smear_gain': 0.3,
    'clutter_density': 0.002,
    'jitter': 0.02,
    'num_train': 64,
    'num_test': 200,
    # metrics
    'point_threshold': 0.1,
    'fscore_tau': 2.0,
    'activity_threshold': 1.0,
    # radar chain
    'samples_per_chirp': 128,
    'chirps_per_frame': 64,
    'tx_count': 2,
    'rx_count': 4,
    'range_lo': 4,
    'range_hi': 120,
    'range_resolution': 0.125,
    'max_velocity': 2.5,
    'angle_bins': 64,
    'cfar_guard': 2,
    'cfar_train': 8,
    'cfar_pfa': 1e-4,
    'bev_extent': 12.0,
    'bev_resolution': 0.1875,
    # run control
    'seed': 0,
    'threads': 1,
}

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {'format': '{levelname} {asctime} {module} {message}', 'style': '{'},
        'simple': {'format': '{levelname} {message}', 'style': '{'},
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'django': {'handlers': ['console'], 'level': 'WARNING', 'propagate': False},
        'processing': {
            'handlers': ['console'],
            'level': os.getenv('R3D_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}

if os.getenv('R3D_LOG_FILE'):
    LOGGING['handlers']['file'] = {
        'level': 'DEBUG',
        'class': 'logging.FileHandler',
        'filename': os.getenv('R3D_LOG_FILE'),
        'formatter': 'verbose',
    }
    LOGGING['loggers']['processing']['handlers'].append('file')
