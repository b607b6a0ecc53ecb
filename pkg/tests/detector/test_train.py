import csv

import numpy as np
import pytest

from honeyscope.errors import ConfigError, TrainingError
from honeyscope.detector.boxes import BoundingBox
from honeyscope.detector.train import BEST_NAME, FINAL_NAME, LOG_NAME, TrainConfig, Trainer
from honeyscope.detector.weights import load_optimizer_state, load_weights, read_metadata


@pytest.fixture
def tiny_set(rng):
    images = rng.uniform(size=(3, 64, 64, 3)).astype(np.float32)
    ground_truth = [
        [(BoundingBox(20, 20, 16, 14), 0)],
        [(BoundingBox(40, 30, 12, 12), 1), (BoundingBox(10, 50, 10, 8), 2)],
        [],
    ]
    return images, ground_truth


def test_zero_epochs_writes_initial_weights(tmp_path, tiny_config, tiny_set):
    trainer = Trainer(tiny_config, TrainConfig(epochs=0, kmeans_anchors=False), tmp_path)
    assert trainer.fit(*tiny_set) == []
    for name in (BEST_NAME, FINAL_NAME):
        assert load_weights(tmp_path / name).config.input_extent == 64
    assert (tmp_path / LOG_NAME).read_text().strip() == 'epoch,total,coord,obj,noobj,class'


def test_epochs_log_one_row_each(tmp_path, tiny_config, tiny_set):
    trainer = Trainer(tiny_config, TrainConfig(epochs=2, batch_size=2, optimizer='sgd', learning_rate=1e-3),
                      tmp_path)
    history = trainer.fit(*tiny_set)
    assert [row['epoch'] for row in history] == [1, 2]
    with open(tmp_path / LOG_NAME) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 2
    assert float(rows[0]['total']) > 0
    assert read_metadata(tmp_path / FINAL_NAME)['epoch'] == 2


def test_kmeans_replaces_anchors(tmp_path, tiny_config, tiny_set):
    trainer = Trainer(tiny_config, TrainConfig(epochs=0, kmeans_anchors=True), tmp_path)
    trainer.fit(*tiny_set)
    assert trainer.model.config.anchors != [(1.0, 1.0), (1.5, 1.2)]
    assert len(trainer.model.config.anchors) == 2


def test_resume_keeps_model(tmp_path, tiny_config, tiny_set):
    first = Trainer(tiny_config, TrainConfig(epochs=0, kmeans_anchors=False), tmp_path / 'a')
    first.fit(*tiny_set)
    model = load_weights(tmp_path / 'a' / FINAL_NAME)
    second = Trainer(None, TrainConfig(epochs=1, batch_size=3), tmp_path / 'b', model=model)
    second.fit(*tiny_set)
    assert second.model is model
    assert len(second.history) == 1


def test_mismatched_inputs(tmp_path, tiny_config, tiny_set):
    images, ground_truth = tiny_set
    trainer = Trainer(tiny_config, TrainConfig(epochs=0), tmp_path)
    with pytest.raises(ValueError):
        trainer.fit(images, ground_truth[:2])
    with pytest.raises(TrainingError):
        trainer.fit(images[:0], [])


@pytest.mark.parametrize("changes", [{'optimizer': 'lbfgs'}, {'batch_size': 0}, {'noobj_iou': 1.0}])
def test_invalid_train_config(changes):
    with pytest.raises(ConfigError):
        TrainConfig(**changes).validate()


def _resume_config(epochs, optimizer='adam'):
    return TrainConfig(epochs=epochs, batch_size=3, learning_rate=1e-4, optimizer=optimizer, kmeans_anchors=False)


def test_saved_weights_carry_optimizer_state(tmp_path, tiny_config, tiny_set):
    Trainer(tiny_config, _resume_config(2), tmp_path).fit(*tiny_set)
    state = load_optimizer_state(tmp_path / FINAL_NAME)
    assert state['name'] == 'adam'
    assert state['step'] == 2
    assert state['first_moments']


def test_resume_continues_the_loss_curve(tmp_path, tiny_config, tiny_set):
    straight = Trainer(tiny_config, _resume_config(6), tmp_path / 'straight').fit(*tiny_set)

    before = Trainer(tiny_config, _resume_config(3), tmp_path / 'a').fit(*tiny_set)
    checkpoint = tmp_path / 'a' / FINAL_NAME
    resumed = Trainer(None, _resume_config(3), tmp_path / 'b', model=load_weights(checkpoint),
                      optimizer_state=load_optimizer_state(checkpoint))
    after = resumed.fit(*tiny_set)

    assert resumed.optimizer.state.step == 6
    assert after[0]['total'] == pytest.approx(before[-1]['total'], rel=0.05)
    assert [row['total'] for row in after] == pytest.approx([row['total'] for row in straight[3:]], rel=1e-3)


def test_resume_with_other_optimizer_starts_fresh(tmp_path, tiny_config, tiny_set):
    Trainer(tiny_config, _resume_config(1), tmp_path / 'a').fit(*tiny_set)
    checkpoint = tmp_path / 'a' / FINAL_NAME
    resumed = Trainer(None, _resume_config(1, optimizer='sgd'), tmp_path / 'b', model=load_weights(checkpoint),
                      optimizer_state=load_optimizer_state(checkpoint))
    resumed.fit(*tiny_set)
    assert resumed.optimizer.name == 'sgd'
    assert resumed.optimizer.state.step == 1
