import json

import pytest

from honeyscope.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main, parse_args
from honeyscope.detector.boxes import Detection, load_detections, save_detections
from honeyscope.detector.train import BEST_NAME, FINAL_NAME, LOG_NAME
from honeyscope.detector.weights import load_optimizer_state
from honeyscope.synth.dataset import MANIFEST_NAME, Dataset


@pytest.fixture
def quick_auth_config(tmp_path):
    path = tmp_path / 'quick.ini'
    path.write_text("[auth]\nmax_epochs = 2000\nper_profile = 4\n")
    return path


def test_print_config(capsys):
    assert main(['--print-config']) == EXIT_OK
    out = capsys.readouterr().out
    assert '[auth]' in out
    assert 'genuine_label = manuka' in out


def test_print_config_applies_flags(capsys):
    assert main(['--seed', '9', '--print-config']) == EXIT_OK
    assert 'seed = 9' in capsys.readouterr().out


def test_unknown_config_key(tmp_path):
    path = tmp_path / 'typo.ini'
    path.write_text("[train]\nepochz = 3\n")
    assert main(['--config', str(path), '--print-config']) == EXIT_USAGE


def test_invalid_override():
    assert main(['--print-config', '--threads', '0']) == EXIT_USAGE


def test_usage_errors_exit_one():
    with pytest.raises(SystemExit) as excinfo:
        parse_args(['no-such-command'])
    assert excinfo.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as excinfo:
        parse_args([])
    assert excinfo.value.code == EXIT_USAGE


def test_gen_data(tmp_path):
    out = tmp_path / 'data'
    assert main(['--seed', '3', 'gen-data', '--out', str(out), '--n-images', '3', '--holdout', '1']) == EXIT_OK
    manifest = json.loads((out / MANIFEST_NAME).read_text())
    assert manifest['n_images'] == 3


def test_grad_check_subset(capsys):
    assert main(['grad-check', '--trials', '2', '--ops', 'matmul', 'tanh']) == EXIT_OK
    out = capsys.readouterr().out
    assert 'matmul' in out
    assert 'FAIL' not in out


def test_grad_check_unknown_case():
    assert main(['grad-check', '--ops', 'no_such_op']) == EXIT_USAGE


def test_auth_pipeline(tmp_path, quick_auth_config, capsys):
    samples = tmp_path / 'samples.json'
    model = tmp_path / 'auth.plna'
    verdicts = tmp_path / 'verdicts.json'
    config = ['--config', str(quick_auth_config)]
    assert main(config + ['gen-samples', '--out', str(samples)]) == EXIT_OK
    assert len(json.loads(samples.read_text())['samples']) == 8

    assert main(config + ['train-auth', '--samples', str(samples), '--out', str(model)]) == EXIT_OK
    assert model.exists()

    assert main(config + ['authenticate', '--model', str(model), '--features', str(samples),
                          '--out', str(verdicts)]) == EXIT_OK
    results = json.loads(verdicts.read_text())['verdicts']
    assert len(results) == 8
    assert all(v['decision'] == v['label'] for v in results)
    assert all(v['declared_profile'] == 'manuka' for v in results)
    assert '8/8 labeled samples classified correctly' in capsys.readouterr().out


def test_authenticate_without_model(tmp_path):
    features = tmp_path / 'sample.json'
    features.write_text(json.dumps({'counts': [3, 1, 6], 'frame_count': 2}))
    assert main(['authenticate', '--model', str(tmp_path / 'missing.plna'),
                 '--features', str(features)]) == EXIT_RUNTIME


TINY_DETECTOR = ['--input-extent', '64', '--width-scale', '0.03125']


@pytest.fixture
def small_data(tmp_path):
    out = tmp_path / 'data'
    assert main(['--seed', '5', 'gen-data', '--out', str(out), '--n-images', '4', '--holdout', '2']) == EXIT_OK
    return out


def test_perfect_detections_score_one(tmp_path, small_data):
    dataset = Dataset(small_data)
    detections = {item.image_id: [Detection(box, class_id, 1.0) for box, class_id in item.annotation.labels]
                  for item in dataset.items('test')}
    record = tmp_path / 'perfect.txt'
    save_detections(record, detections)

    loaded = load_detections(record)
    assert list(loaded) == list(detections)
    for image_id, expected in detections.items():
        assert [d.class_id for d in loaded[image_id]] == [d.class_id for d in expected]
        for got, want in zip(loaded[image_id], expected):
            assert got.box.corners == pytest.approx(want.box.corners, abs=1e-2)

    report = tmp_path / 'report.json'
    assert main(['evaluate', '--detections', str(record), '--data', str(small_data), '--split', 'test',
                 '--out', str(report)]) == EXIT_OK
    metrics = json.loads(report.read_text())['metrics']
    for key in ('precision', 'sensitivity', 'specificity', 'f1'):
        assert metrics[key] == 1.0
    assert metrics['counts']['fp'] == 0
    assert metrics['counts']['fn'] == 0


def test_detect_writes_loadable_record(tmp_path, small_data):
    train = tmp_path / 'train'
    assert main(['train-detector', '--data', str(small_data), '--out', str(train), '--epochs', '0']
                + TINY_DETECTOR) == EXIT_OK
    record = tmp_path / 'detections.txt'
    assert main(['detect', '--weights', str(train / FINAL_NAME), '--data', str(small_data), '--conf', '0.0',
                 '--out', str(record)]) == EXIT_OK
    detections = load_detections(record)
    assert set(detections) <= set(Dataset(small_data).image_ids('test'))
    assert all(0.0 <= d.confidence <= 1.0 for found in detections.values() for d in found)


def test_resume_restores_optimizer_state(tmp_path, small_data):
    first, second = tmp_path / 'first', tmp_path / 'second'
    assert main(['train-detector', '--data', str(small_data), '--out', str(first), '--epochs', '2',
                 '--batch-size', '1'] + TINY_DETECTOR) == EXIT_OK
    assert load_optimizer_state(first / FINAL_NAME)['step'] == 4
    assert main(['train-detector', '--data', str(small_data), '--out', str(second), '--epochs', '1',
                 '--batch-size', '1', '--resume', str(first / FINAL_NAME)]) == EXIT_OK
    assert load_optimizer_state(second / FINAL_NAME)['step'] == 6


def _full_pipeline(root):
    data, train = root / 'data', root / 'train'
    record, report = root / 'detections.txt', root / 'report.json'
    common = ['--seed', '11', '--threads', '1']
    assert main(common + ['gen-data', '--out', str(data), '--n-images', '4', '--holdout', '1']) == EXIT_OK
    assert main(common + ['train-detector', '--data', str(data), '--out', str(train), '--epochs', '5',
                          '--batch-size', '2'] + TINY_DETECTOR) == EXIT_OK
    assert main(common + ['detect', '--weights', str(train / FINAL_NAME), '--data', str(data),
                          '--out', str(record)]) == EXIT_OK
    assert main(common + ['evaluate', '--detections', str(record), '--data', str(data),
                          '--out', str(report)]) == EXIT_OK
    return [train / FINAL_NAME, train / BEST_NAME, train / LOG_NAME, record, report]


def test_pipeline_is_reproducible(tmp_path):
    first = _full_pipeline(tmp_path / 'a')
    second = _full_pipeline(tmp_path / 'b')
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes(), a.name


@pytest.mark.slow
def test_detector_meets_metric_floors(tmp_path):
    data, train = tmp_path / 'data', tmp_path / 'train'
    record, report = tmp_path / 'detections.txt', tmp_path / 'report.json'
    assert main(['--threads', '1', 'gen-data', '--out', str(data), '--n-images', '200', '--holdout', '50']) == EXIT_OK
    assert main(['--threads', '1', 'train-detector', '--data', str(data), '--out', str(train)]) == EXIT_OK
    assert main(['detect', '--weights', str(train / BEST_NAME), '--data', str(data), '--conf', '0.5',
                 '--out', str(record)]) == EXIT_OK
    assert main(['evaluate', '--detections', str(record), '--data', str(data), '--iou', '0.5',
                 '--out', str(report)]) == EXIT_OK
    metrics = json.loads(report.read_text())['metrics']
    assert metrics['precision'] >= 0.663
    assert metrics['sensitivity'] >= 0.914
    assert metrics['specificity'] >= 0.761
    assert metrics['f1'] >= 0.769
