"""
Single-hidden-layer authentication classifier.

Pipeline: raw AuthFeatures vector -> StandardScaler -> tanh hidden layer ->
sigmoid output, the probability that the sample is the genuine label.
Training is full-batch gradient descent on binary cross-entropy.
"""

import logging
from dataclasses import dataclass, asdict, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import expit
from sklearn.preprocessing import StandardScaler

from honeyscope.errors import ConfigError, CorruptFileError, TrainingError
from honeyscope.tensor import ops
from honeyscope.tensor.autograd import Tensor, precision
from honeyscope.tensor.container import AUTH_MAGIC, Record, read_container, write_container
from honeyscope.tensor.optim import SGD
from honeyscope.auth.features import FEATURE_NAMES, AuthFeatures

logger = logging.getLogger(__name__)

SCALER_RECORD = 1
HIDDEN_RECORD = 2
OUTPUT_RECORD = 3

NON_SEPARABLE = 'non_separable'
MISCLASSIFIED = 'misclassified'
PLATEAU_WINDOW = 500
PLATEAU_DELTA = 1e-9


@dataclass
class AuthConfig:
    hidden_units: int = 8
    learning_rate: float = 0.05
    max_epochs: int = 20000
    convergence_loss: float = 1e-3
    threshold: float = 0.5
    genuine_label: str = 'manuka'
    dilution_tolerance: float = 0.3
    blend_tolerance: float = 0.15
    seed: int = 0

    def validate(self):
        if self.hidden_units < 1:
            raise ConfigError(f"Hidden units must be >= 1, got {self.hidden_units}")
        if self.learning_rate <= 0 or self.max_epochs < 1:
            raise ConfigError("Learning rate must be positive and max_epochs >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"Decision threshold must be in (0, 1), got {self.threshold}")
        if not 0.0 <= self.dilution_tolerance < 1.0:
            raise ConfigError(f"Dilution tolerance must be in [0, 1), got {self.dilution_tolerance}")
        if not 0.0 <= self.blend_tolerance <= 1.0:
            raise ConfigError(f"Blend tolerance must be in [0, 1], got {self.blend_tolerance}")

    def to_dict(self):
        return asdict(self)


def _restore_scaler(mean, scale):
    scaler = StandardScaler()
    scaler.mean_ = np.asarray(mean, dtype=np.float64)
    scaler.scale_ = np.asarray(scale, dtype=np.float64)
    scaler.var_ = scaler.scale_ ** 2
    scaler.n_features_in_ = len(scaler.mean_)
    scaler.n_samples_seen_ = 0
    return scaler


@dataclass
class AuthModel:
    scaler: StandardScaler
    hidden_weights: np.ndarray
    hidden_bias: np.ndarray
    output_weights: np.ndarray
    output_bias: np.ndarray
    labels: Tuple[str, str]
    threshold: float = 0.5
    activation: str = 'tanh'
    training_flags: List[str] = field(default_factory=list)
    final_loss: Optional[float] = None
    epochs_run: int = 0

    @property
    def negative_label(self):
        return self.labels[0]

    @property
    def genuine_label(self):
        return self.labels[1]

    @property
    def hidden_units(self):
        return self.hidden_weights.shape[1]

    def scores(self, vectors):
        """Genuine-label probabilities for raw feature rows."""
        x = self.scaler.transform(np.asarray(vectors, dtype=np.float64).reshape(-1, len(FEATURE_NAMES)))
        hidden = np.tanh(x @ self.hidden_weights + self.hidden_bias)
        return expit(hidden @ self.output_weights + self.output_bias)[:, 0]

    def decide(self, score):
        # a score exactly at the threshold is not genuine
        return self.genuine_label if score > self.threshold else self.negative_label


def _conflicting_duplicates(x, y):
    seen = {}
    for row, target in zip(np.round(x, 12), y):
        key = tuple(row)
        if seen.setdefault(key, target) != target:
            return True
    return False


def train_auth(samples, config=None):
    """
    Train the classifier.

    Args:
        samples: list of (AuthFeatures, label) with exactly two distinct labels
        config: AuthConfig; config.genuine_label must be one of the labels

    Returns:
        AuthModel: with training_flags set when the data cannot be separated

    Raises:
        TrainingError: If fewer than two samples or not exactly two labels are given
        ConfigError: If the genuine label is not among the sample labels
    """
    config = config or AuthConfig()
    config.validate()
    samples = list(samples)
    if len(samples) < 2:
        raise TrainingError(f"Need at least 2 samples, got {len(samples)}")
    labels = sorted({label for _, label in samples})
    if len(labels) != 2:
        raise TrainingError(f"Need samples of exactly two labels, got {labels}")
    if config.genuine_label not in labels:
        raise ConfigError(f"Genuine label '{config.genuine_label}' not among the sample labels {labels}")
    negative = labels[0] if labels[1] == config.genuine_label else labels[1]

    raw = np.array([features.vector() for features, _ in samples])
    targets = np.array([[1.0 if label == config.genuine_label else 0.0] for _, label in samples])
    scaler = StandardScaler().fit(raw)
    x = scaler.transform(raw)

    flags = []
    if _conflicting_duplicates(x, targets[:, 0]):
        flags.append(NON_SEPARABLE)
        logger.warning("Identical feature vectors carry both labels; the data is not separable")

    rng = np.random.default_rng(config.seed)
    inputs, hidden = x.shape[1], config.hidden_units
    with precision('float64'):
        w1 = Tensor(rng.normal(0.0, np.sqrt(2.0 / (inputs + hidden)), size=(inputs, hidden)), requires_grad=True)
        b1 = Tensor(np.zeros(hidden), requires_grad=True)
        w2 = Tensor(rng.normal(0.0, np.sqrt(2.0 / (hidden + 1)), size=(hidden, 1)), requires_grad=True)
        b2 = Tensor(np.zeros(1), requires_grad=True)
        features = Tensor(x)
        optimizer = SGD([w1, b1, w2, b2], lr=config.learning_rate, momentum=0.0)

        loss_value = None
        window_start = None
        epoch = 0
        for epoch in range(1, config.max_epochs + 1):
            optimizer.zero_grad()
            logits = ops.tanh(features @ w1 + b1) @ w2 + b2
            loss = (ops.softplus(logits) - logits * targets).mean()
            loss.backward()
            optimizer.step()
            loss_value = loss.item()
            if loss_value < config.convergence_loss:
                break
            if epoch % PLATEAU_WINDOW == 1:
                window_start = loss_value
            elif epoch % PLATEAU_WINDOW == 0 and window_start - loss_value < PLATEAU_DELTA:
                logger.info(f"Loss plateaued at {loss_value:.6f} after {epoch} epochs")
                break

    model = AuthModel(scaler, w1.data.copy(), b1.data.copy(), w2.data.copy(), b2.data.copy(),
                      labels=(negative, config.genuine_label), threshold=config.threshold,
                      training_flags=flags, final_loss=loss_value, epochs_run=epoch)
    predicted = model.scores(raw) > config.threshold
    wrong = int((predicted != targets[:, 0].astype(bool)).sum())
    if wrong:
        model.training_flags.append(MISCLASSIFIED)
        logger.warning(f"{wrong} of {len(samples)} training samples remain misclassified")
    logger.info(f"Trained authentication model: {epoch} epochs, final loss {loss_value:.6f}, "
                f"genuine label '{config.genuine_label}'")
    return model


def authenticate(model, features):
    """
    Classify one sample.

    Args:
        model: AuthModel
        features: Raw AuthFeatures; standardization happens inside the model

    Returns:
        tuple: (decision label, genuine-label score in [0, 1])
    """
    if not isinstance(features, AuthFeatures):
        raise TypeError(f"authenticate takes raw AuthFeatures, got {type(features).__name__}")
    score = float(model.scores(features.vector())[0])
    return model.decide(score), score


def save_auth_model(model, path):
    config = {
        'labels': list(model.labels),
        'threshold': model.threshold,
        'activation': model.activation,
        'hidden_units': model.hidden_units,
        'feature_names': FEATURE_NAMES,
        'training_flags': list(model.training_flags),
        'final_loss': model.final_loss,
        'epochs_run': model.epochs_run,
    }
    records = [
        Record(SCALER_RECORD, [model.scaler.mean_, model.scaler.scale_]),
        Record(HIDDEN_RECORD, [model.hidden_weights, model.hidden_bias]),
        Record(OUTPUT_RECORD, [model.output_weights, model.output_bias]),
    ]
    write_container(path, AUTH_MAGIC, config, records)


def load_auth_model(path):
    config, records = read_container(path, AUTH_MAGIC)
    kinds = [record.kind for record in records]
    if kinds != [SCALER_RECORD, HIDDEN_RECORD, OUTPUT_RECORD]:
        raise CorruptFileError(f"unexpected record kinds {kinds}", path=path)
    if any(len(record.buffers) != 2 for record in records):
        raise CorruptFileError("every record must hold two buffers", path=path)
    (mean, scale), (w1, b1), (w2, b2) = (record.buffers for record in records)
    try:
        labels = tuple(config['labels'])
        threshold = float(config['threshold'])
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptFileError(f"config block is missing {e}", path=path)
    return AuthModel(
        scaler=_restore_scaler(mean, scale),
        hidden_weights=w1.astype(np.float64),
        hidden_bias=b1.astype(np.float64),
        output_weights=w2.astype(np.float64),
        output_bias=b2.astype(np.float64),
        labels=labels,
        threshold=threshold,
        activation=config.get('activation', 'tanh'),
        training_flags=list(config.get('training_flags', [])),
        final_loss=config.get('final_loss'),
        epochs_run=int(config.get('epochs_run', 0)),
    )
