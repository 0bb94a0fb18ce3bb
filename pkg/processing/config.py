"""Run configuration: project defaults, a flat ``key = value`` file, then overrides.

One RunConfig is shared by every command so that all training modes run with the
same hyperparameters. The resolved values are echoed into each output directory
as ``run_config.txt``, which ``--config`` reads back.
"""
import logging
from pathlib import Path

from django.conf import settings

from .exceptions import ConfigError, MissingFileError, R3DError
from .services.attention import GuidanceConfig
from .services.dataset import SceneConfig
from .services.denoiser import DenoiserArch
from .services.diffusion import TrainConfig
from .services.radar import GridSpec, RadarFrameConfig
from .services.sampler import SamplerConfig
from .services.schedule import build_schedule

logger = logging.getLogger(__name__)

CONFIG_FILENAME = 'run_config.txt'
_TRUE = {'1', 'true', 'yes', 'on'}
_FALSE = {'0', 'false', 'no', 'off'}


def _parse(key, raw, default):
    text = str(raw).strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(int(part) for part in text.replace('(', '').replace(')', '').split(',') if part.strip())
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {key} (expected {type(default).__name__})")
    return text


def _format(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, tuple):
        return ','.join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_config_file(path):
    """Parse a flat config file into a dict of raw strings."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"config file not found: {path}")
    entries = {}
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{path.name}:{number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split('=', 1))
        entries[key] = value
    return entries


def parse_assignments(assignments):
    """``['key=value', ...]`` from ``--set`` flags."""
    entries = {}
    for item in assignments or ():
        if '=' not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split('=', 1)
        entries[key.strip()] = value.strip()
    return entries


class RunConfig:
    """Resolved configuration values; build typed configs with the ``*_config`` methods."""

    def __init__(self, values):
        self.values = dict(values)

    @classmethod
    def defaults(cls):
        return dict(settings.R3D_DEFAULTS)

    @classmethod
    def load(cls, path=None, overrides=None):
        defaults = cls.defaults()
        values = dict(defaults)
        layers = []
        if path:
            layers.append(read_config_file(path))
        if overrides:
            layers.append(overrides)
        for layer in layers:
            for key, raw in layer.items():
                if key not in defaults:
                    raise ConfigError(f"unknown config key {key!r}")
                if raw is None:
                    continue
                values[key] = _parse(key, raw, defaults[key])
        config = cls(values)
        config.validate()
        return config

    def __getitem__(self, key):
        return self.values[key]

    def with_values(self, **changes):
        unknown = set(changes) - set(self.values)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return RunConfig({**self.values, **changes})

    def validate(self):
        try:
            train = self.train_config().validate()
            self.scene_config().validate(train.arch.factor)
            self.radar_config().validate()
        except R3DError as e:
            raise ConfigError(str(e))
        if self['mode'] not in ('direct', 'residual', 'r3d'):
            raise ConfigError(f"unknown mode {self['mode']!r}")
        if self['threads'] < 1:
            raise ConfigError("threads must be >= 1")
        if not (0 < self['point_threshold'] < 1):
            raise ConfigError("point_threshold must lie in (0, 1)")
        return self

    # ---------------------------
    # typed views
    # ---------------------------
    def guidance_config(self):
        v = self.values
        return GuidanceConfig(v['lambda_s'], v['lambda_c'], v['alpha_low'], v['beta_low'],
                              v['sigma_threshold'], v['mask_steepness'], v['mask_center'])

    def arch(self):
        return DenoiserArch(self['depth'], tuple(self['widths']), self['embed_dim'])

    def train_config(self):
        v = self.values
        return TrainConfig(
            rho=v['rho'], sigma_min=v['sigma_min'], sigma_max=v['sigma_max'], num_steps=v['num_steps'],
            guidance=self.guidance_config(), arch=self.arch(), batch_size=v['batch_size'],
            train_steps=v['train_steps'], learning_rate=v['learning_rate'], momentum=v['momentum'],
            seed=v['seed'], w_max=v['w_max'], grad_clip=v['grad_clip'], log_every=v['log_every'])

    def schedule(self):
        return build_schedule(self['rho'], self['sigma_min'], self['sigma_max'], self['num_steps'])

    def sampler_config(self, seed=None):
        return SamplerConfig(self.schedule(), self['seed'] if seed is None else seed,
                             self['record_trajectory'], self['terminal_step'])

    def scene_config(self):
        v = self.values
        return SceneConfig(v['scene'], v['height'], v['width'], v['walls_min'], v['walls_max'],
                           v['boxes_min'], v['boxes_max'], v['dropout'], v['angular_blur'],
                           v['smear_gain'], v['clutter_density'], v['jitter'], v['seed'])

    def radar_config(self):
        v = self.values
        return RadarFrameConfig(v['samples_per_chirp'], v['chirps_per_frame'], v['tx_count'],
                                v['rx_count'], v['range_lo'], v['range_hi'], v['range_resolution'],
                                v['max_velocity'], v['angle_bins'])

    def grid_spec(self):
        return GridSpec.square(self['bev_extent'], self['bev_resolution'])

    # ---------------------------
    # persistence
    # ---------------------------
    def dumps(self):
        return ''.join(f"{key} = {_format(value)}\n" for key, value in self.values.items())

    def dump(self, directory):
        path = Path(directory) / CONFIG_FILENAME
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        return path


def help_text():
    """Defaults listing for command ``--help`` epilogs."""
    return 'config keys (defaults): ' + ', '.join(
        f"{key}={_format(value)}" for key, value in settings.R3D_DEFAULTS.items())
