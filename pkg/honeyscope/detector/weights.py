"""
Detector weights files (PLNW container).

Layer records come first, in network order. A file written during training
may carry the optimizer state after them: one record per moment buffer, with
the parameter indices and the scalar state kept in the config block.
"""

import logging

from honeyscope.errors import ConfigError, CorruptFileError, ShapeError
from honeyscope.tensor.container import DETECTOR_MAGIC, Record, read_container, write_container
from honeyscope.detector.network import DetectorConfig, build_network

logger = logging.getLogger(__name__)

OPTIMIZER_FIRST = 101
OPTIMIZER_SECOND = 102
OPTIMIZER_KINDS = (OPTIMIZER_FIRST, OPTIMIZER_SECOND)


def save_weights(model, path, metadata=None, optimizer=None):
    """
    Write every parameterized layer, in network order, plus the model config.

    Args:
        model: DetectorModel
        path: Destination file
        metadata: Optional JSON-serializable dict stored beside the config
        optimizer: Optional Optimizer whose state is stored for resuming
    """
    layers = model.parameter_layers()
    config = {
        'detector': model.config.to_dict(),
        'layers': [layer.name for layer in layers],
        'metadata': metadata or {},
    }
    records = [Record(layer.kind, list(layer.buffers())) for layer in layers]
    if optimizer is not None:
        state = optimizer.state_dict()
        first = sorted(state['first_moments'])
        second = sorted(state['second_moments'])
        config['optimizer'] = {
            'name': state['name'],
            'lr': state['lr'],
            'step': state['step'],
            'hyperparameters': state['hyperparameters'],
            'first_moments': first,
            'second_moments': second,
        }
        records += [Record(OPTIMIZER_FIRST, [state['first_moments'][index]]) for index in first]
        records += [Record(OPTIMIZER_SECOND, [state['second_moments'][index]]) for index in second]
    write_container(path, DETECTOR_MAGIC, config, records)


def read_metadata(path):
    config, _ = read_container(path, DETECTOR_MAGIC)
    return config.get('metadata', {})


def _split_records(config, records, n_layers, path):
    layer_records, extra = records[:n_layers], records[n_layers:]
    if len(layer_records) != n_layers:
        raise CorruptFileError(f"{len(records)} layer records for a network with {n_layers}", path=path)
    stray = [record.kind for record in extra if record.kind not in OPTIMIZER_KINDS]
    if stray:
        raise CorruptFileError(f"{len(stray)} unexpected records after the layers (kinds {stray})", path=path)
    if extra and 'optimizer' not in config:
        raise CorruptFileError(f"{len(extra)} optimizer records but no optimizer section", path=path)
    return layer_records, extra


def _build(config, path):
    try:
        detector_config = DetectorConfig.from_dict(config['detector'])
    except (KeyError, TypeError) as e:
        raise CorruptFileError(f"config block has no usable detector section: {e}", path=path)
    try:
        return build_network(detector_config)
    except (ConfigError, ValueError) as e:
        raise CorruptFileError(f"stored detector config is invalid: {e}", path=path)


def load_weights(path):
    """
    Rebuild a detector from a weights file.

    Raises:
        CorruptFileError: If the file is damaged or does not match its own config
        UnsupportedVersionError: If the format version is not supported
    """
    config, records = read_container(path, DETECTOR_MAGIC)
    model = _build(config, path)

    layers = model.parameter_layers()
    layer_records, _ = _split_records(config, records, len(layers), path)
    for layer, record in zip(layers, layer_records):
        if record.kind != layer.kind:
            raise CorruptFileError(f"layer '{layer.name}' stored as kind {record.kind}, expected {layer.kind}",
                                   path=path)
        try:
            layer.load_buffers(record.buffers)
        except (ShapeError, ValueError) as e:
            raise CorruptFileError(str(e), path=path)
    logger.info(f"Loaded {len(layers)} layers from {path}")
    return model.eval()


def load_optimizer_state(path):
    """
    The optimizer state stored in a weights file, in Optimizer.state_dict form.

    Returns:
        dict or None: None when the file was written without an optimizer

    Raises:
        CorruptFileError: If the optimizer section does not match its records
    """
    config, records = read_container(path, DETECTOR_MAGIC)
    section = config.get('optimizer')
    if section is None:
        return None
    try:
        n_layers = len(config['layers'])
        first, second = list(section['first_moments']), list(section['second_moments'])
        state = {key: section[key] for key in ('name', 'lr', 'step', 'hyperparameters')}
    except (KeyError, TypeError) as e:
        raise CorruptFileError(f"optimizer section is incomplete: {e}", path=path)
    _, extra = _split_records(config, records, n_layers, path)
    kinds = [record.kind for record in extra]
    expected = [OPTIMIZER_FIRST] * len(first) + [OPTIMIZER_SECOND] * len(second)
    if kinds != expected or any(len(record.buffers) != 1 for record in extra):
        raise CorruptFileError(f"optimizer records do not match the optimizer section "
                               f"({len(first)} first and {len(second)} second moments expected)", path=path)
    buffers = [record.buffers[0] for record in extra]
    state['first_moments'] = dict(zip(first, buffers[:len(first)]))
    state['second_moments'] = dict(zip(second, buffers[len(first):]))
    return state
