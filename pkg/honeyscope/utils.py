import os
import sys
import json
import random
import logging
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
DATA_NAME = 'honeyscope'
SOURCE_ROOT = Path(__file__).resolve().parent.parent


def data_path(name, source_root=SOURCE_ROOT, prefix=sys.prefix):
    """
    Locate a shipped data directory (config or profiles).

    A source checkout keeps it beside the package; an installed copy finds it
    under <prefix>/share/honeyscope, where setup.py puts it.
    """
    local = Path(source_root) / name
    if local.is_dir():
        return local
    return Path(prefix) / 'share' / DATA_NAME / name


def load_json(filename):
    with open(filename, 'r') as f:
        data = json.load(f)
    return data


def setup_logging(log_file=None, level=logging.INFO):
    """Set up logging configuration for all modules"""
    root_logger = logging.getLogger()
    # Clear any existing handlers to avoid duplicates
    root_logger.handlers = []

    handlers = [logging.StreamHandler()]
    if log_file is not None:
        handlers.append(logging.FileHandler(log_file))
    for handler in handlers:
        handler.setFormatter(logging.Formatter(LOG_FORMAT))

    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers)


def set_deterministic_seeds(seed=0):
    """Seed the global RNGs. Library code takes explicit generators; this covers the rest."""
    random.seed(seed)
    np.random.seed(seed)


def child_seeds(master_seed, n):
    """Derive n independent integer seeds from a master seed."""
    children = np.random.SeedSequence(master_seed).spawn(n)
    return [int(child.generate_state(1)[0]) for child in children]


def resolve_threads(threads=None):
    """Thread count from the argument, then POLLEN_THREADS, else 1."""
    if threads is None:
        env = os.environ.get('POLLEN_THREADS')
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError(f"Thread count must be >= 1, got {threads}")
    return threads


@contextmanager
def thread_limit(threads):
    with threadpool_limits(limits=threads):
        yield


@contextmanager
def atomic_write(path, mode='w'):
    """
    Write to a temporary file beside `path` and rename it into place on success.

    Args:
        path: Destination path
        mode: 'w' for text, 'wb' for bytes
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    try:
        with os.fdopen(fd, mode) as f:
            yield f
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise


def write_json(path, data):
    with atomic_write(path) as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')
