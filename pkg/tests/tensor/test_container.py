import struct

import numpy as np
import pytest

from honeyscope.errors import CorruptFileError, UnsupportedVersionError
from honeyscope.tensor.container import (
    AUTH_MAGIC, DETECTOR_MAGIC, HEADER, Record, decode, encode, read_container, write_container)


@pytest.fixture
def records(rng):
    return [Record(1, [rng.normal(size=(3, 3, 2, 4)).astype(np.float32), np.arange(4, dtype=np.float32)]),
            Record(7, [np.float32(2.5) * np.ones(())])]


def test_round_trip(tmp_path, records):
    path = tmp_path / 'model.plnw'
    write_container(path, DETECTOR_MAGIC, {'name': 'test', 'extent': 416}, records)
    config, loaded = read_container(path, DETECTOR_MAGIC)
    assert config == {'name': 'test', 'extent': 416}
    assert [r.kind for r in loaded] == [1, 7]
    assert np.array_equal(loaded[0].buffers[0], records[0].buffers[0])
    assert loaded[1].buffers[0].shape == ()


def test_header_layout(records):
    blob = encode(DETECTOR_MAGIC, {}, records)
    magic, version = HEADER.unpack_from(blob, 0)
    assert magic == b'PLNW'
    assert version == 1


def test_wrong_magic(records):
    blob = encode(DETECTOR_MAGIC, {}, records)
    with pytest.raises(CorruptFileError) as info:
        decode(blob, AUTH_MAGIC)
    assert info.value.offset == 0


def test_unsupported_version(records):
    blob = bytearray(encode(DETECTOR_MAGIC, {}, records))
    blob[4:8] = struct.pack('<I', 99)
    with pytest.raises(UnsupportedVersionError) as info:
        decode(bytes(blob), DETECTOR_MAGIC)
    assert info.value.offset == 4


def test_flipped_byte_fails_checksum(records):
    blob = bytearray(encode(DETECTOR_MAGIC, {}, records))
    blob[len(blob) // 2] ^= 0xFF
    with pytest.raises(CorruptFileError):
        decode(bytes(blob), DETECTOR_MAGIC)


@pytest.mark.parametrize("keep", [3, 10, 40])
def test_truncated(records, keep):
    blob = encode(DETECTOR_MAGIC, {}, records)
    with pytest.raises(CorruptFileError):
        decode(blob[:keep], DETECTOR_MAGIC)
