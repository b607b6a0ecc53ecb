import numpy as np
import pytest
from sklearn.preprocessing import StandardScaler

from honeyscope.errors import ConfigError, CorruptFileError, TrainingError
from honeyscope.auth.features import AuthFeatures
from honeyscope.auth.model import (
    MISCLASSIFIED, NON_SEPARABLE, AuthConfig, AuthModel, authenticate, load_auth_model, save_auth_model,
    train_auth)
from honeyscope.auth.profiles import ProfileManager
from honeyscope.tensor.container import DETECTOR_MAGIC, write_container


@pytest.fixture
def two_samples():
    return [(AuthFeatures((10, 1, 0), 1), 'eucalyptus'), (AuthFeatures((2, 1, 7), 1), 'manuka')]


@pytest.fixture(scope='module')
def honey_samples():
    rng = np.random.default_rng(42)
    manager = ProfileManager()
    samples = []
    for label in ('eucalyptus', 'manuka'):
        profile = manager.get(label)
        samples += [(profile.sample_features(10, rng), label) for _ in range(5)]
    return samples


def test_separable_pair_converges(two_samples):
    model = train_auth(two_samples, AuthConfig(max_epochs=5000))
    assert model.final_loss < 0.01
    assert model.training_flags == []
    assert authenticate(model, two_samples[1][0])[0] == 'manuka'
    assert authenticate(model, two_samples[0][0])[0] == 'eucalyptus'


def test_contradictory_duplicate_is_flagged(two_samples):
    features = two_samples[0][0]
    samples = two_samples + [(features, 'manuka')]
    model = train_auth(samples, AuthConfig(max_epochs=1500))
    assert NON_SEPARABLE in model.training_flags
    assert MISCLASSIFIED in model.training_flags
    assert np.isfinite(model.final_loss)


def test_honey_samples_all_classified(honey_samples):
    model = train_auth(honey_samples, AuthConfig(max_epochs=3000))
    assert MISCLASSIFIED not in model.training_flags
    for features, label in honey_samples:
        assert authenticate(model, features)[0] == label


@pytest.mark.slow
def test_honey_samples_converge_fully(honey_samples):
    model = train_auth(honey_samples)
    assert model.final_loss < 1e-2
    assert model.training_flags == []


def test_training_is_deterministic(two_samples):
    a = train_auth(two_samples, AuthConfig(max_epochs=300))
    b = train_auth(two_samples, AuthConfig(max_epochs=300))
    assert np.array_equal(a.hidden_weights, b.hidden_weights)
    assert a.final_loss == b.final_loss


def test_score_at_threshold_is_not_genuine():
    scaler = StandardScaler().fit(np.array([[0.0, 0.0, 0.0, 0.0], [2.0, 2.0, 2.0, 2.0]]))
    model = AuthModel(scaler, np.zeros((4, 8)), np.zeros(8), np.zeros((8, 1)), np.zeros(1),
                      labels=('eucalyptus', 'manuka'))
    decision, score = authenticate(model, AuthFeatures((1, 1, 1), 1))
    assert score == 0.5
    assert decision == 'eucalyptus'


def test_raw_features_only(two_samples):
    model = train_auth(two_samples, AuthConfig(max_epochs=10))
    with pytest.raises(TypeError):
        authenticate(model, model.scaler.transform([two_samples[0][0].vector()])[0])


def test_training_set_errors(two_samples):
    with pytest.raises(TrainingError):
        train_auth(two_samples[:1])
    with pytest.raises(TrainingError):
        train_auth([(two_samples[0][0], 'manuka'), (two_samples[1][0], 'manuka')])
    with pytest.raises(ConfigError):
        train_auth(two_samples, AuthConfig(genuine_label='acacia'))


@pytest.mark.parametrize("changes", [{'hidden_units': 0}, {'threshold': 1.0}, {'dilution_tolerance': 1.0}])
def test_invalid_config(changes):
    with pytest.raises(ConfigError):
        AuthConfig(**changes).validate()


def test_save_load_round_trip(tmp_path, two_samples):
    model = train_auth(two_samples, AuthConfig(max_epochs=500))
    path = tmp_path / 'auth.plna'
    save_auth_model(model, path)
    loaded = load_auth_model(path)
    assert loaded.labels == model.labels
    assert loaded.training_flags == model.training_flags
    assert loaded.epochs_run == model.epochs_run
    vectors = [features.vector() for features, _ in two_samples]
    assert np.allclose(loaded.scores(vectors), model.scores(vectors), atol=1e-5)
    for features, _ in two_samples:
        assert authenticate(loaded, features)[0] == authenticate(model, features)[0]


def test_load_rejects_detector_file(tmp_path):
    path = tmp_path / 'wrong.plna'
    write_container(path, DETECTOR_MAGIC, {}, [])
    with pytest.raises(CorruptFileError):
        load_auth_model(path)


def test_fresh_samples_classified(honey_samples):
    model = train_auth(honey_samples, AuthConfig(max_epochs=3000))
    rng = np.random.default_rng(7)
    manager = ProfileManager()
    correct = 0
    for label in ('eucalyptus', 'manuka'):
        profile = manager.get(label)
        correct += sum(authenticate(model, profile.sample_features(10, rng))[0] == label for _ in range(10))
    assert correct >= 18
