import tempfile
from pathlib import Path

from django.conf import settings
from django.test import SimpleTestCase, override_settings

from processing.config import CONFIG_FILENAME, RunConfig, help_text, parse_assignments, read_config_file
from processing.exceptions import ConfigError, MissingFileError


class RunConfigTests(SimpleTestCase):

    def test_defaults(self):
        config = RunConfig.load()
        self.assertEqual(config.values, settings.R3D_DEFAULTS)
        self.assertEqual(config.arch().widths, (16, 32, 64))
        self.assertEqual(config.schedule().num_steps, 18)
        self.assertEqual(config.grid_spec().shape, (64, 64))

    def test_file_then_overrides(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'run.txt'
            path.write_text("# tiny run\nnum_steps = 6\nwidths = 4, 8\ndepth = 1  # one level\nterminal_step = yes\n")
            config = RunConfig.load(path, {'num_steps': '9', 'seed': None})
        self.assertEqual(config['num_steps'], 9)
        self.assertEqual(config['widths'], (4, 8))
        self.assertEqual(config['depth'], 1)
        self.assertIs(config['terminal_step'], True)
        self.assertEqual(config['seed'], 0)
        self.assertTrue(config.sampler_config().terminal_step)

    def test_unknown_key(self):
        with self.assertRaises(ConfigError) as ctx:
            RunConfig.load(overrides={'sigma_maximum': '3'})
        self.assertEqual(ctx.exception.exit_code, 3)

    def test_bad_values(self):
        with self.assertRaises(ConfigError):
            RunConfig.load(overrides={'num_steps': 'many'})
        with self.assertRaises(ConfigError):
            RunConfig.load(overrides={'terminal_step': 'maybe'})
        with self.assertRaises(ConfigError):
            RunConfig.load(overrides={'mode': 'guided'})
        with self.assertRaises(ConfigError):
            RunConfig.load(overrides={'sigma_threshold': '100'})
        with self.assertRaises(ConfigError):
            RunConfig.load(overrides={'widths': '4,8'})

    def test_dump_reload(self):
        config = RunConfig.load(overrides={'rho': '3.5', 'widths': '4,8', 'depth': '1', 'scene': 'hallway'})
        with tempfile.TemporaryDirectory() as tmp:
            path = config.dump(tmp)
            self.assertEqual(path.name, CONFIG_FILENAME)
            self.assertEqual(RunConfig.load(path).values, config.values)

    def test_file_errors(self):
        with self.assertRaises(MissingFileError):
            read_config_file('/nonexistent/run.txt')
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'bad.txt'
            path.write_text("rho 7\n")
            with self.assertRaises(ConfigError):
                read_config_file(path)
        with self.assertRaises(ConfigError):
            parse_assignments(['rho'])

    @override_settings(R3D_DEFAULTS={'rho': 7.0, 'seed': 0})
    def test_help_lists_defaults(self):
        self.assertEqual(help_text(), 'config keys (defaults): rho=7.0, seed=0')
