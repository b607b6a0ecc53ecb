import numpy as np
import pytest

from honeyscope.auth.checks import blend_check, closest_profile, dilution_check, distribution_compare
from honeyscope.auth.profiles import ProfileManager


@pytest.fixture(scope='module')
def manager():
    return ProfileManager()


def test_dilution_at_reference():
    result = dilution_check(5.0, 5.0)
    assert result.ratio == 1.0
    assert not result.diluted


def test_dilution_flagged():
    result = dilution_check(2.5, 5.0)
    assert result.ratio == 0.5
    assert result.diluted


def test_dilution_is_monotone():
    flags = [dilution_check(density, 10.0, 0.3).diluted for density in np.linspace(0.0, 15.0, 31)]
    assert flags == sorted(flags, reverse=True)


@pytest.mark.parametrize("reference, tolerance", [(0.0, 0.3), (-1.0, 0.3), (5.0, 1.0), (5.0, -0.1)])
def test_dilution_arguments(reference, tolerance):
    with pytest.raises(ValueError):
        dilution_check(1.0, reference, tolerance)


@pytest.mark.parametrize("a, b, expected", [
    ((4, 2, 2), (4, 2, 2), 0.0),
    ((3, 1, 1), (30, 10, 10), 0.0),
    ((1, 0, 0), (0, 1, 0), 1.0),
    ((2, 1, 1), (1, 1, 2), 0.25),
])
def test_distribution_compare(a, b, expected):
    assert distribution_compare(a, b) == pytest.approx(expected)
    assert distribution_compare(b, a) == pytest.approx(expected)


@pytest.mark.parametrize("a, b", [((0, 0, 0), (1, 1, 1)), ((1, -1, 2), (1, 1, 1)), ((1, 1), (1, 1, 1))])
def test_distribution_compare_errors(a, b):
    with pytest.raises(ValueError):
        distribution_compare(a, b)


def test_closest_profile(manager):
    profile, distance = closest_profile((80, 15, 5), manager.profiles.values())
    assert profile.label == 'eucalyptus'
    assert distance == pytest.approx(0.0)
    profile, _ = closest_profile((20, 20, 60), manager.profiles.values())
    assert profile.label == 'manuka'
    with pytest.raises(ValueError):
        closest_profile((1, 1, 1), [])


def test_blend_check_threshold():
    assert not blend_check((25, 15, 60), (0.25, 0.15, 0.6)).blended
    result = blend_check((60, 15, 25), (0.25, 0.15, 0.6))
    assert result.blended
    assert result.divergence == pytest.approx(0.35)


def test_diluted_samples_are_flagged(manager, rng):
    eucalyptus = manager.get('eucalyptus')
    diluted = eucalyptus.diluted(0.5)
    reference = eucalyptus.reference_density
    caught = sum(dilution_check(diluted.sample_features(30, rng).density, reference).diluted for _ in range(20))
    passed = sum(not dilution_check(eucalyptus.sample_features(30, rng).density, reference).diluted
                 for _ in range(20))
    assert caught >= 18
    assert passed >= 18


def test_blended_samples_are_flagged(manager, rng):
    manuka = manager.get('manuka')
    blended = manuka.blend(manager.get('eucalyptus'), 0.5)
    caught = sum(blend_check(blended.sample_features(30, rng).counts, manuka.mixture).blended for _ in range(20))
    passed = sum(not blend_check(manuka.sample_features(30, rng).counts, manuka.mixture).blended
                 for _ in range(20))
    assert caught >= 18
    assert passed >= 18


@pytest.mark.slow
def test_dilution_detection_rate(manager):
    rng = np.random.default_rng(2024)
    eucalyptus = manager.get('eucalyptus')
    diluted = eucalyptus.diluted(0.5)
    caught = sum(dilution_check(diluted.sample_features(30, rng).density, eucalyptus.reference_density).diluted
                 for _ in range(100))
    assert caught >= 95


@pytest.mark.slow
def test_profiles_separate_and_resamples_agree(manager):
    rng = np.random.default_rng(99)
    eucalyptus, manuka = manager.get('eucalyptus'), manager.get('manuka')
    across, within = [], []
    for _ in range(100):
        a, b = eucalyptus.sample_features(100, rng).counts, manuka.sample_features(100, rng).counts
        across.append(distribution_compare(a, b))
        for profile in (eucalyptus, manuka):
            first, second = profile.sample_features(100, rng), profile.sample_features(100, rng)
            within.append(distribution_compare(first.counts, second.counts))
    assert min(across) > 0.3
    assert max(within) < 0.15
