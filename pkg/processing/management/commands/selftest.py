from django.core.management.base import CommandError

from ...services.oracles import SUITES
from ...tasks import run_selftest
from ._base import WorkflowCommand


class Command(WorkflowCommand):
    help = 'Run the analytic-oracle suites and print pass/fail per suite.'

    def add_workflow_arguments(self, parser):
        parser.add_argument('--only', action='append', choices=[name for name, _ in SUITES])

    def run(self, config, options):
        results = run_selftest(options.get('only'))
        for result in results:
            line = f"{'PASS' if result.passed else 'FAIL'}  {result.name}: {result.detail} ({result.seconds:.1f}s)"
            self.stdout.write(self.style.SUCCESS(line) if result.passed else self.style.ERROR(line))
        failed = [r.name for r in results if not r.passed]
        if failed:
            raise CommandError(f"selftest: {len(failed)} suites failed: {', '.join(failed)}", returncode=1)
