from ...tasks import run_train
from ._base import WorkflowCommand


class Command(WorkflowCommand):
    help = 'Train a denoiser (direct, residual or r3d objective); writes a checkpoint and a CSV log.'

    def add_workflow_arguments(self, parser):
        parser.add_argument('--data', required=True, help='dataset directory written by synth')
        parser.add_argument('--out', required=True, help='run directory')
        parser.add_argument('--mode', choices=('direct', 'residual', 'r3d'))
        parser.add_argument('--steps', type=int, help='training steps (train_steps)')

    def config_overrides(self, options):
        overrides = {}
        if options.get('mode'):
            overrides['mode'] = options['mode']
        if options.get('steps') is not None:
            overrides['train_steps'] = str(options['steps'])
        return overrides

    def run(self, config, options):
        summary = run_train(config, options['data'], options['out'])
        self.stdout.write(self.style.SUCCESS(
            f"{summary['mode']}: {summary['steps']} steps on {summary['frames']} frames, "
            f"final weighted loss {summary['final_weighted_loss']:.6g}"))
