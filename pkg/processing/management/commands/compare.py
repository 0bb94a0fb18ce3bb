from pathlib import Path

from ...tasks import METRICS_NAME, run_compare
from ._base import WorkflowCommand


def _labelled(item):
    label, sep, path = item.partition('=')
    if not sep:
        path = Path(item)
        return (path.parent.name if path.is_file() else path.name), _metrics_file(path)
    return label, _metrics_file(Path(path))


def _metrics_file(path):
    return path / METRICS_NAME if path.is_dir() else path


class Command(WorkflowCommand):
    help = 'Compare eval outputs of several methods; the first one is the baseline.'

    def add_workflow_arguments(self, parser):
        parser.add_argument('metrics', nargs='+', metavar='[LABEL=]PATH',
                            help='metrics.csv files or eval output directories')
        parser.add_argument('--out', help='write comparison.csv here')

    def run(self, config, options):
        rows = run_compare([_labelled(item) for item in options['metrics']], options.get('out'))
        self.stdout.write(f"{'method':>10} {'scene':>10} {'CD':>8} {'HD':>8} {'F':>7} {'dCD%':>7} {'dHD%':>7}")
        for row in rows:
            self.stdout.write(f"{row['method']:>10} {row['scene']:>10} {row['cd']:8.4f} {row['hd']:8.4f} "
                              f"{row['fscore']:7.4f} {row['cd_change_pct']:7.2f} {row['hd_change_pct']:7.2f}")
