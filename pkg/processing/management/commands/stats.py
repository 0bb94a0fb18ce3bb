from ...tasks import run_stats
from ._base import WorkflowCommand


class Command(WorkflowCommand):
    help = 'Residual concentration statistics in 8-bit display units.'

    def add_workflow_arguments(self, parser):
        parser.add_argument('--data', required=True)
        parser.add_argument('--out', required=True)
        parser.add_argument('--attention', action='store_true', help='export guidance maps as images')

    def run(self, config, options):
        result = run_stats(config, options['data'], options['out'], options['attention'])
        for target in ('residual', 'lidar'):
            stats = result[target]
            self.stdout.write(f"{target:>8}: active {stats.active_fraction:.4f}  range {stats.value_range:.1f}  "
                              f"std {stats.stddev:.2f}  within10 {stats.frac_within_10:.3f}")
