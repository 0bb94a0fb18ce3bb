from ...tasks import run_eval
from ._base import WorkflowCommand


class Command(WorkflowCommand):
    help = 'Score predictions against ground truth: per-frame and mean CD, HD and F-Score.'

    def add_workflow_arguments(self, parser):
        parser.add_argument('--pred', required=True, help='directory of predicted pairs')
        parser.add_argument('--truth', required=True, help='dataset directory (test split is used)')
        parser.add_argument('--out', required=True)

    def run(self, config, options):
        result = run_eval(config, options['pred'], options['truth'], options['out'], config['threads'])
        for row in result['summary']:
            self.stdout.write(f"{row['scene']:>10}  CD {row['cd']:.4f}  HD {row['hd']:.4f}  "
                              f"F {row['fscore']:.4f}  ({row['frames']} frames)")
