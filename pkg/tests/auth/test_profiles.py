import json

import numpy as np
import pytest

from honeyscope.errors import ConfigError
from honeyscope.auth.profiles import HoneyProfile, ProfileManager


@pytest.fixture
def eucalyptus():
    return ProfileManager().get('eucalyptus')


def write_profile(directory, name, **fields):
    data = {'label': name, 'mixture': [0.5, 0.3, 0.2], 'density_range': [2.0, 4.0], **fields}
    (directory / f'{name}.json').write_text(json.dumps(data))


def test_bundled_profiles():
    manager = ProfileManager()
    assert sorted(manager.names) == ['acacia', 'eucalyptus', 'manuka', 'thyme']
    for label in manager.names:
        profile = manager.get(label)
        assert sum(profile.mixture) == pytest.approx(1.0)


def test_unknown_profile():
    with pytest.raises(ConfigError, match="not found"):
        ProfileManager().get('clover')


def test_custom_directory(tmp_path):
    write_profile(tmp_path, 'clover')
    manager = ProfileManager(tmp_path)
    assert manager.names == ['clover']
    assert manager.get('clover').reference_density == 3.0


@pytest.mark.parametrize("fields", [
    {'mixture': [0.5, 0.3, 0.1]},
    {'mixture': [0.5, 0.5]},
    {'mixture': [1.2, -0.1, -0.1]},
    {'density_range': [4.0, 2.0]},
    {'density_range': [0.0, 2.0]},
])
def test_invalid_profile(tmp_path, fields):
    write_profile(tmp_path, 'bad', **fields)
    with pytest.raises(ConfigError):
        ProfileManager(tmp_path)


def test_unparsable_profile(tmp_path):
    (tmp_path / 'broken.json').write_text('{"label": ')
    with pytest.raises(ConfigError, match="broken.json"):
        ProfileManager(tmp_path)


def test_empty_or_missing_directory(tmp_path):
    with pytest.raises(ConfigError):
        ProfileManager(tmp_path)
    with pytest.raises(ConfigError):
        ProfileManager(tmp_path / 'absent')


def test_diluted(eucalyptus):
    diluted = eucalyptus.diluted(0.5)
    assert diluted.label == 'eucalyptus-diluted'
    assert diluted.mixture == eucalyptus.mixture
    assert diluted.density_range == (4.0, 6.0)
    with pytest.raises(ValueError):
        eucalyptus.diluted(0.0)


def test_blend(eucalyptus):
    manuka = ProfileManager().get('manuka')
    blended = manuka.blend(eucalyptus, 0.5)
    assert blended.label == 'manuka+eucalyptus'
    assert np.allclose(blended.mixture, [0.525, 0.15, 0.325])
    assert blended.density_range == pytest.approx((6.0, 9.5))
    assert manuka.blend(eucalyptus, 0.0).mixture == pytest.approx(manuka.mixture)
    with pytest.raises(ValueError):
        manuka.blend(eucalyptus, 1.5)


def test_sample_frames(eucalyptus):
    layouts = eucalyptus.sample_frames(3, rng=5, sample_id='jar')
    assert [layout.image_id for layout in layouts] == ['jar_f00', 'jar_f01', 'jar_f02']
    again = eucalyptus.sample_frames(3, rng=5, sample_id='jar')
    assert [layout.annotation.labels for layout in layouts] == [layout.annotation.labels for layout in again]
    with pytest.raises(ValueError):
        eucalyptus.sample_frames(0)


def test_sample_density_within_range(eucalyptus, rng):
    low, high = eucalyptus.density_range
    for _ in range(3):
        features = eucalyptus.sample_features(100, rng)
        assert low - 1.0 <= features.density <= high + 1.0
        assert features.frame_count == 100


def test_dict_round_trip(eucalyptus):
    assert HoneyProfile.from_dict(eucalyptus.to_dict()) == eucalyptus
