from pathlib import Path

from django.core.management.base import CommandError

from ...tasks import run_radar_process, simulate_raw_frames
from ._base import WorkflowCommand


class Command(WorkflowCommand):
    help = 'Run the radar chain on raw "R3DA" frames: BEV and polar images plus point CSVs.'

    def add_workflow_arguments(self, parser):
        parser.add_argument('raw', nargs='*', help='raw frame files')
        parser.add_argument('--out', required=True)
        parser.add_argument('--simulate', type=int, default=0,
                            help='first write this many simulated frames into OUT/raw and process them')

    def run(self, config, options):
        paths = list(options['raw'])
        if options['simulate']:
            paths += simulate_raw_frames(config, Path(options['out']) / 'raw', options['simulate'])
        if not paths:
            raise CommandError('parameter: no raw frames given', returncode=2)
        for summary in run_radar_process(config, paths, options['out'], config['threads']):
            self.stdout.write(f"{summary['frame']}: {summary['detections']} detections, "
                              f"{summary['dropped']} outside BEV")
