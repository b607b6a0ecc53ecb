"""
Run configuration.

Defaults live in config/default.ini beside the package, or under
share/honeyscope once installed. A user file passed with --config overlays
them and command-line overrides overlay both. Keys that the defaults file
does not know are rejected so typos fail loudly.
"""

import io
import logging
import configparser
from dataclasses import dataclass, field, asdict
from typing import List, Optional

import numpy as np

from honeyscope.errors import ConfigError
from honeyscope.detector.network import DEFAULT_ANCHORS, DetectorConfig
from honeyscope.detector.train import TrainConfig
from honeyscope.synth.slide import SlideSpec
from honeyscope.synth.imageio import FORMATS
from honeyscope.auth.model import AuthConfig
from honeyscope.utils import data_path

logger = logging.getLogger(__name__)

CONFIG_DIR = data_path('config')
DEFAULT_CONFIG = CONFIG_DIR / 'default.ini'

DETECTOR_KEYS = ['num_anchors', 'input_extent', 'width_scale', 'leaky_slope', 'bn_momentum', 'bn_eps']
TRAIN_KEYS = ['epochs', 'batch_size', 'learning_rate', 'optimizer', 'lambda_coord', 'lambda_noobj',
              'noobj_iou', 'kmeans_anchors']
SYNTH_KEYS = ['extent', 'overlap_limit', 'blur_sigma', 'noise_amplitude', 'tint_jitter', 'max_attempts']
AUTH_KEYS = ['hidden_units', 'learning_rate', 'max_epochs', 'convergence_loss', 'threshold', 'genuine_label',
             'dilution_tolerance', 'blend_tolerance']


@dataclass
class PathsConfig:
    data_dir: str = 'data'
    train_dir: str = 'runs/detector'
    weights: str = 'runs/detector/best.plnw'
    detections: str = 'runs/detections.txt'
    report: str = 'runs/report.json'
    samples: str = 'runs/samples.json'
    auth_model: str = 'runs/auth.plna'
    profiles_dir: str = ''


@dataclass
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SlideSpec = field(default_factory=SlideSpec)
    auth: AuthConfig = field(default_factory=AuthConfig)
    seed: int = 0
    threads: Optional[int] = None
    match_iou: float = 0.5
    conf_threshold: float = 0.5
    nms_iou: float = 0.45
    n_images: int = 250
    holdout: int = 50
    image_format: str = 'png'
    profiles: List[str] = field(default_factory=lambda: ['eucalyptus', 'manuka'])
    per_profile: int = 5
    frames: int = 10

    def validate(self):
        self.detector.validate()
        self.train.validate()
        self.synth.validate()
        self.auth.validate()
        for name in ('match_iou', 'conf_threshold', 'nms_iou'):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must be in (0, 1), got {value}")
        if self.n_images < 0 or not 0 <= self.holdout <= self.n_images:
            raise ConfigError(f"Need 0 <= holdout <= n_images, got holdout={self.holdout}, n_images={self.n_images}")
        if f'.{self.image_format}' not in FORMATS:
            raise ConfigError(f"Image format '{self.image_format}' not supported. "
                              f"Supported: {[s.lstrip('.') for s in FORMATS]}")
        if self.per_profile < 1 or self.frames < 1:
            raise ConfigError("per_profile and frames must be >= 1")
        if self.threads is not None and self.threads < 1:
            raise ConfigError(f"Thread count must be >= 1, got {self.threads}")

    def sections(self):
        class_low, class_high = self.synth.class_counts[0]
        return {
            'paths': asdict(self.paths),
            'detector': {**{key: getattr(self.detector, key) for key in DETECTOR_KEYS},
                         'conf_threshold': self.conf_threshold, 'nms_iou': self.nms_iou},
            'train': {key: getattr(self.train, key) for key in TRAIN_KEYS},
            'synth': {'n_images': self.n_images, 'holdout': self.holdout, 'image_format': self.image_format,
                      'class_count_min': class_low, 'class_count_max': class_high,
                      'bubble_count_max': self.synth.bubble_count[1],
                      **{key: getattr(self.synth, key) for key in SYNTH_KEYS}},
            'auth': {**{key: getattr(self.auth, key) for key in AUTH_KEYS},
                     'profiles': ' '.join(self.profiles), 'per_profile': self.per_profile,
                     'frames': self.frames},
            'run': {'seed': self.seed, 'threads': '' if self.threads is None else self.threads,
                    'match_iou': self.match_iou},
        }

    def to_ini(self):
        parser = configparser.ConfigParser()
        for section, values in self.sections().items():
            parser[section] = {key: _format(value) for key, value in values.items()}
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()


def _format(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    return str(value)


def _read(parser, section, key, default):
    """Typed read of one key, converted by the type of its dataclass default."""
    try:
        if isinstance(default, bool):
            return parser.getboolean(section, key)
        if isinstance(default, int):
            return parser.getint(section, key)
        if isinstance(default, float):
            return parser.getfloat(section, key)
        return parser.get(section, key)
    except ValueError as e:
        raise ConfigError(f"[{section}] {key}: {e}")


def _check_known(known, incoming, source):
    for section in incoming.sections():
        if not known.has_section(section):
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key in incoming[section]:
            if not known.has_option(section, key):
                raise ConfigError(f"{source}: unknown key '{key}' in [{section}]")


def _anchors(count):
    if count == len(DEFAULT_ANCHORS):
        return list(DEFAULT_ANCHORS)
    return [(float(s), float(s)) for s in np.linspace(DEFAULT_ANCHORS[0][0], DEFAULT_ANCHORS[-1][0], count)]


def load_config(path=None, overrides=None):
    """
    Resolve the run configuration.

    Args:
        path: Optional user INI file overlaying config/default.ini
        overrides: Optional {section: {key: value}} applied last (command-line flags)

    Returns:
        RunConfig: validated

    Raises:
        ConfigError: On unknown keys, unparsable values or failed validation
    """
    parser = configparser.ConfigParser()
    if not parser.read(DEFAULT_CONFIG):
        raise ConfigError(f"Defaults file {DEFAULT_CONFIG} is missing")
    if path is not None:
        user = configparser.ConfigParser()
        try:
            if not user.read(path):
                raise ConfigError(f"Config file {path} not found")
        except configparser.Error as e:
            raise ConfigError(f"{path}: {e}")
        _check_known(parser, user, path)
        parser.read_dict(user)
    if overrides:
        incoming = configparser.ConfigParser()
        incoming.read_dict({section: {key: _format(value) for key, value in values.items() if value is not None}
                            for section, values in overrides.items()})
        _check_known(parser, incoming, 'command line')
        parser.read_dict(incoming)

    run = RunConfig()
    run.paths = PathsConfig(**{key: parser.get('paths', key) for key in asdict(run.paths)})

    detector = {key: _read(parser, 'detector', key, getattr(run.detector, key)) for key in DETECTOR_KEYS}
    if detector['num_anchors'] < 1:
        raise ConfigError(f"[detector] num_anchors must be >= 1, got {detector['num_anchors']}")
    run.detector = DetectorConfig(anchors=_anchors(detector['num_anchors']), **detector)
    run.conf_threshold = _read(parser, 'detector', 'conf_threshold', run.conf_threshold)
    run.nms_iou = _read(parser, 'detector', 'nms_iou', run.nms_iou)

    run.seed = _read(parser, 'run', 'seed', run.seed)
    threads = parser.get('run', 'threads').strip()
    run.threads = _read(parser, 'run', 'threads', 0) if threads else None
    run.match_iou = _read(parser, 'run', 'match_iou', run.match_iou)

    run.train = TrainConfig(seed=run.seed,
                            **{key: _read(parser, 'train', key, getattr(run.train, key)) for key in TRAIN_KEYS})

    class_range = (_read(parser, 'synth', 'class_count_min', 0), _read(parser, 'synth', 'class_count_max', 0))
    run.synth = SlideSpec(seed=run.seed, class_counts=[class_range] * len(run.detector.class_names),
                          bubble_count=(0, _read(parser, 'synth', 'bubble_count_max', 0)),
                          **{key: _read(parser, 'synth', key, getattr(run.synth, key)) for key in SYNTH_KEYS})
    run.n_images = _read(parser, 'synth', 'n_images', run.n_images)
    run.holdout = _read(parser, 'synth', 'holdout', run.holdout)
    run.image_format = _read(parser, 'synth', 'image_format', run.image_format).lower()

    run.auth = AuthConfig(seed=run.seed,
                          **{key: _read(parser, 'auth', key, getattr(run.auth, key)) for key in AUTH_KEYS})
    run.profiles = parser.get('auth', 'profiles').split()
    run.per_profile = _read(parser, 'auth', 'per_profile', run.per_profile)
    run.frames = _read(parser, 'auth', 'frames', run.frames)

    run.validate()
    return run
