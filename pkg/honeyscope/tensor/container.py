"""
Tagged little-endian binary container for model parameters.

Layout:
    magic (4 bytes) | version u32
    payload:
        config length u32 | config JSON (UTF-8)
        record count u32
        per record: kind tag u32 | buffer count u32
                    per buffer: ndim u32 | extents u32 x ndim | float32 x prod(extents)
    CRC-32 of the payload u32
"""

import json
import struct
import zlib
import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from honeyscope.errors import CorruptFileError, UnsupportedVersionError
from honeyscope.utils import atomic_write

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
HEADER = struct.Struct('<4sI')
U32 = struct.Struct('<I')

DETECTOR_MAGIC = b'PLNW'
AUTH_MAGIC = b'PLNA'


@dataclass
class Record:
    kind: int
    buffers: List[np.ndarray] = field(default_factory=list)


def encode(magic, config, records):
    payload = bytearray()
    config_bytes = json.dumps(config, sort_keys=True).encode('utf-8')
    payload += U32.pack(len(config_bytes))
    payload += config_bytes
    payload += U32.pack(len(records))
    for record in records:
        payload += U32.pack(record.kind)
        payload += U32.pack(len(record.buffers))
        for buffer in record.buffers:
            buffer = np.asarray(buffer)
            payload += U32.pack(buffer.ndim)
            for extent in buffer.shape:
                payload += U32.pack(extent)
            payload += buffer.astype('<f4').tobytes()
    checksum = zlib.crc32(bytes(payload)) & 0xFFFFFFFF
    return HEADER.pack(magic, FORMAT_VERSION) + bytes(payload) + U32.pack(checksum)


def write_container(path, magic, config, records):
    blob = encode(magic, config, records)
    with atomic_write(path, 'wb') as f:
        f.write(blob)
    logger.info(f"Wrote {len(records)} records ({len(blob)} bytes) to {path}")


class _Reader:
    """Sequential reader that reports the byte offset of whatever goes wrong."""

    def __init__(self, blob, path, start, end):
        self.blob = blob
        self.path = path
        self.offset = start
        self.end = end

    def read(self, size, what):
        if self.offset + size > self.end:
            raise CorruptFileError(f"truncated while reading {what}", path=self.path, offset=self.offset)
        chunk = self.blob[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def u32(self, what):
        return U32.unpack(self.read(U32.size, what))[0]


def decode(blob, magic, path=None):
    """Parse a container; returns (config dict, list of Record)."""
    if len(blob) < HEADER.size + U32.size:
        raise CorruptFileError("file too short for header and checksum", path=path, offset=len(blob))
    found_magic, version = HEADER.unpack_from(blob, 0)
    if found_magic != magic:
        raise CorruptFileError(f"bad magic {found_magic!r}, expected {magic!r}", path=path, offset=0)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"format version {version} is not supported (expected {FORMAT_VERSION})", path=path, offset=4)

    end = len(blob) - U32.size
    stored = U32.unpack_from(blob, end)[0]
    actual = zlib.crc32(blob[HEADER.size:end]) & 0xFFFFFFFF
    if stored != actual:
        raise CorruptFileError(
            f"checksum mismatch (stored {stored:08x}, computed {actual:08x})", path=path, offset=end)

    reader = _Reader(blob, path, HEADER.size, end)
    config_length = reader.u32('config length')
    try:
        config = json.loads(reader.read(config_length, 'config').decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptFileError(f"unreadable config block: {e}", path=path, offset=HEADER.size + U32.size)

    records = []
    for _ in range(reader.u32('record count')):
        kind = reader.u32('record kind')
        buffers = []
        for _ in range(reader.u32('buffer count')):
            ndim = reader.u32('buffer rank')
            shape = tuple(reader.u32('buffer extent') for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            raw = reader.read(4 * count, 'buffer data')
            buffers.append(np.frombuffer(raw, dtype='<f4').astype(np.float32).reshape(shape))
        records.append(Record(kind, buffers))
    if reader.offset != end:
        raise CorruptFileError("trailing bytes after last record", path=path, offset=reader.offset)
    return config, records


def read_container(path, magic):
    with open(path, 'rb') as f:
        blob = f.read()
    return decode(blob, magic, path=path)
