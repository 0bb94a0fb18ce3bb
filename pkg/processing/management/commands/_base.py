"""Shared plumbing for the workflow commands: config flags and error mapping."""
import logging

from django.core.management.base import BaseCommand, CommandError

from ...config import RunConfig, help_text, parse_assignments
from ...exceptions import R3DError

logger = logging.getLogger(__name__)


class WorkflowCommand(BaseCommand):
    """Adds --config/--set/--seed/--threads and turns R3DError into a one-line exit."""

    def create_parser(self, prog_name, subcommand, **kwargs):
        kwargs.setdefault('epilog', help_text())
        return super().create_parser(prog_name, subcommand, **kwargs)

    def add_arguments(self, parser):
        parser.add_argument('--config', help='flat "key = value" file (e.g. a run_config.txt)')
        parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                            help='override one config key; repeatable')
        parser.add_argument('--seed', type=int, help='single source of randomness')
        parser.add_argument('--threads', type=int, help='frame-parallel workers; 1 is fully sequential')
        self.add_workflow_arguments(parser)

    def add_workflow_arguments(self, parser):
        pass

    def load_config(self, options):
        overrides = parse_assignments(options.get('set'))
        for key in ('seed', 'threads'):
            if options.get(key) is not None:
                overrides[key] = str(options[key])
        overrides.update(self.config_overrides(options))
        return RunConfig.load(options.get('config'), overrides)

    def config_overrides(self, options):
        return {}

    def handle(self, *args, **options):
        try:
            config = self.load_config(options)
            self.run(config, options)
        except R3DError as e:
            logger.debug(f"{self.__class__.__module__} failed", exc_info=True)
            raise CommandError(e.one_line(), returncode=e.exit_code)

    def run(self, config, options):
        raise NotImplementedError
