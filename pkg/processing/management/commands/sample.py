from ...tasks import run_sample
from ._base import WorkflowCommand


class Command(WorkflowCommand):
    help = 'Enhance radar BEVs with a trained checkpoint (Heun sampling, fused with the input).'

    def add_workflow_arguments(self, parser):
        parser.add_argument('--checkpoint', required=True)
        parser.add_argument('--data', required=True, help='dataset directory (test split is used)')
        parser.add_argument('--out', required=True)
        parser.add_argument('--steps', type=int, help='sampling schedule length (num_steps)')
        parser.add_argument('--trajectory', action='store_true', help='dump every sampler state as TIFF')

    def config_overrides(self, options):
        overrides = {}
        if options.get('steps') is not None:
            overrides['num_steps'] = str(options['steps'])
        if options.get('trajectory'):
            overrides['record_trajectory'] = 'true'
        return overrides

    def run(self, config, options):
        summary = run_sample(config, options['checkpoint'], options['data'], options['out'], config['threads'])
        self.stdout.write(self.style.SUCCESS(f"{summary['frames']} frames enhanced ({summary['mode']} model)"))
