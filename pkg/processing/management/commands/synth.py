from ...tasks import run_synth
from ._base import WorkflowCommand


class Command(WorkflowCommand):
    help = 'Generate synthetic radar/LiDAR BEV pairs (train and test splits).'

    def add_workflow_arguments(self, parser):
        parser.add_argument('--out', required=True, help='output directory')
        parser.add_argument('--train', type=int, help='number of training scenes (num_train)')
        parser.add_argument('--test', type=int, help='number of test scenes (num_test)')
        parser.add_argument('--scene', choices=('indoor', 'hallway', 'outdoor'))
        parser.add_argument('--pgm', action='store_true', help='also export 8-bit PGM pairs')

    def config_overrides(self, options):
        return {'scene': options['scene']} if options.get('scene') else {}

    def run(self, config, options):
        summary = run_synth(config, options['out'], options.get('train'), options.get('test'),
                            options['pgm'], config['threads'])
        for split, info in summary.items():
            self.stdout.write(f"{split}: {info['frames']} frames, "
                              f"mean active fraction {info['mean_active_fraction']:.4f}")
