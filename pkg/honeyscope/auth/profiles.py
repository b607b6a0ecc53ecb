"""
HoneyProfile - synthetic stand-ins for real honey samples.

A profile fixes how likely each grain class is and how many grains a frame
holds on average. Profiles live as JSON documents under profiles/ and are
loaded by ProfileManager, one file per honey.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from honeyscope.errors import ConfigError
from honeyscope.detector.boxes import CLASS_NAMES
from honeyscope.synth.slide import SlideSpec, layout_slide
from honeyscope.auth.features import features_from_annotations
from honeyscope.utils import data_path

logger = logging.getLogger(__name__)

PROFILES_DIR = data_path('profiles')
MIXTURE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class HoneyProfile:
    label: str
    mixture: Tuple[float, ...]
    density_range: Tuple[float, float]
    description: str = ''

    def validate(self):
        if len(self.mixture) != len(CLASS_NAMES):
            raise ConfigError(f"Profile '{self.label}' needs {len(CLASS_NAMES)} mixture weights, "
                              f"got {len(self.mixture)}")
        if min(self.mixture) < 0 or abs(sum(self.mixture) - 1.0) > MIXTURE_TOLERANCE:
            raise ConfigError(f"Profile '{self.label}' mixture must be non-negative and sum to 1, "
                              f"got {list(self.mixture)}")
        low, high = self.density_range
        if low <= 0 or high < low:
            raise ConfigError(f"Profile '{self.label}' density range must satisfy 0 < low <= high, "
                              f"got ({low}, {high})")

    @property
    def reference_density(self):
        """Expected grains per frame."""
        return 0.5 * (self.density_range[0] + self.density_range[1])

    def sample_frames(self, n_frames, rng=None, base_spec=None, sample_id=None):
        """
        Lay out one sample's frames.

        The sample density is uniform in the profile's range; each frame then
        draws a Poisson grain count split across classes by the mixture.

        Returns:
            list of SlideLayout
        """
        if n_frames < 1:
            raise ValueError(f"A sample needs at least one frame, got {n_frames}")
        self.validate()
        rng = np.random.default_rng(rng)
        spec = base_spec or SlideSpec()
        sample_id = sample_id or self.label
        mixture = np.asarray(self.mixture, dtype=np.float64)
        mixture = mixture / mixture.sum()
        density = rng.uniform(*self.density_range)
        layouts = []
        for frame in range(n_frames):
            counts = rng.multinomial(rng.poisson(density), mixture)
            layouts.append(layout_slide(spec, rng, image_id=f'{sample_id}_f{frame:02d}',
                                        counts=[int(c) for c in counts]))
        return layouts

    def sample_features(self, n_frames, rng=None, base_spec=None):
        """Ground-truth AuthFeatures of one sampled set of frames."""
        layouts = self.sample_frames(n_frames, rng, base_spec)
        return features_from_annotations([layout.annotation for layout in layouts])

    def diluted(self, factor):
        """The same honey cut with syrup: grain density scaled by `factor`."""
        if not 0.0 < factor <= 1.0:
            raise ValueError(f"Dilution factor must be in (0, 1], got {factor}")
        low, high = self.density_range
        return HoneyProfile(f'{self.label}-diluted', self.mixture, (low * factor, high * factor),
                            f"{self.label} diluted to {factor:.0%} density")

    def blend(self, other, fraction):
        """Mix in `fraction` of another honey."""
        if not 0.0 <= fraction <= 1.0:
            raise ValueError(f"Blend fraction must be in [0, 1], got {fraction}")
        mixture = tuple((1 - fraction) * a + fraction * b for a, b in zip(self.mixture, other.mixture))
        density = tuple((1 - fraction) * a + fraction * b
                        for a, b in zip(self.density_range, other.density_range))
        return HoneyProfile(f'{self.label}+{other.label}', mixture, density,
                            f"{self.label} blended with {fraction:.0%} {other.label}")

    def to_dict(self):
        return {'label': self.label, 'mixture': list(self.mixture),
                'density_range': list(self.density_range), 'description': self.description}

    @classmethod
    def from_dict(cls, data):
        profile = cls(data['label'], tuple(float(p) for p in data['mixture']),
                      tuple(float(d) for d in data['density_range']), data.get('description', ''))
        profile.validate()
        return profile


class ProfileManager:
    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else PROFILES_DIR
        self.profiles = self.load_profiles(self.directory)
        if not self.profiles:
            raise ConfigError(f"No honey profiles found in {self.directory}")

    def load_profiles(self, directory):
        profiles = {}
        errors = []
        if not directory.is_dir():
            raise ConfigError(f"Profile directory {directory} does not exist")
        for filepath in sorted(directory.glob('*.json')):
            try:
                with open(filepath, 'r') as f:
                    profile = HoneyProfile.from_dict(json.load(f))
                profiles[profile.label] = profile
            except json.JSONDecodeError as e:
                errors.append(f"Error loading profile '{filepath.name}': {e}")
            except (KeyError, TypeError, ValueError) as e:
                errors.append(f"Invalid profile '{filepath.name}': {e}")
        for message in errors:
            logger.error(message)
        if errors:
            raise ConfigError("\n".join(errors))
        logger.debug(f"Loaded {len(profiles)} honey profiles from {directory}")
        return profiles

    @property
    def names(self):
        return list(self.profiles)

    def get(self, label):
        if label not in self.profiles:
            raise ConfigError(f"Profile '{label}' not found; available: {', '.join(self.names)}")
        return self.profiles[label]

    def reload(self):
        self.profiles = self.load_profiles(self.directory)
