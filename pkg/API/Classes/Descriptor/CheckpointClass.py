"""Model checkpoint files.

Layout, little-endian::

    b"LDESC"  u2 version
    u4 config length, config JSON (utf-8)
    u4 tensor count
    per tensor: u2 name length, name, u1 ndim, u4 dims[ndim], f4 data
    32-byte SHA-256 over every preceding byte

Running batch-norm statistics are stored as ordinary tensors.
"""
from collections import OrderedDict
from pathlib import Path
import hashlib
import json
import logging
import struct

import numpy as np

from Classes.Base.CustomExceptionClass import (
    CorruptCheckpoint, InvalidConfig, ScanFileNotFound, ShapeMismatch, VersionMismatch,
)
from Classes.Descriptor.ModelClass import ModelConfig, ModelParams, parameter_shapes

logger = logging.getLogger(__name__)

MAGIC = b"LDESC"
VERSION = 1
DIGEST_BYTES = hashlib.sha256().digest_size


def save_checkpoint(params, path):
    path = Path(path)
    config = json.dumps(params.config.to_dict(), sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack('<H', VERSION), struct.pack('<I', len(config)), config,
             struct.pack('<I', len(params.tensors))]
    for name, value in params.tensors.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack('<H', len(encoded)) + encoded)
        parts.append(struct.pack('<B', value.ndim) + struct.pack(f'<{value.ndim}I', *value.shape))
        parts.append(np.ascontiguousarray(value, dtype='<f4').tobytes())
    body = b"".join(parts)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(body + hashlib.sha256(body).digest())
    logger.info("Saved %s checkpoint (%d tensors) to %s", params.config.head, len(params.tensors), path)


class _Reader:
    def __init__(self, data, name):
        self.data, self.offset, self.name = data, 0, name

    def take(self, count):
        if self.offset + count > len(self.data):
            raise CorruptCheckpoint(f"{self.name}: truncated at byte {self.offset}")
        chunk = self.data[self.offset:self.offset + count]
        self.offset += count
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, channels=None):
    """Read a checkpoint; ``channels`` guards against a mismatched patch channel set."""
    path = Path(path)
    if not path.is_file():
        raise ScanFileNotFound(f"Checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise CorruptCheckpoint(f"{path.name}: not a descriptor checkpoint")
    if len(raw) < len(MAGIC) + 2 + DIGEST_BYTES:
        raise CorruptCheckpoint(f"{path.name}: truncated")
    (version,) = struct.unpack_from('<H', raw, len(MAGIC))
    if version != VERSION:
        raise VersionMismatch(f"{path.name}: checkpoint version {version}, expected {VERSION}")
    body, digest = raw[:-DIGEST_BYTES], raw[-DIGEST_BYTES:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCheckpoint(f"{path.name}: checksum mismatch")

    reader = _Reader(body, path.name)
    reader.take(len(MAGIC) + 2)
    (config_len,) = reader.unpack('<I')
    try:
        config = ModelConfig.from_mapping(json.loads(reader.take(config_len).decode("utf-8")))
    except (ValueError, InvalidConfig) as e:
        raise CorruptCheckpoint(f"{path.name}: unreadable model config ({e})")
    (count,) = reader.unpack('<I')
    tensors = OrderedDict()
    for _ in range(count):
        (name_len,) = reader.unpack('<H')
        name = reader.take(name_len).decode("utf-8", "replace")
        (ndim,) = reader.unpack('<B')
        shape = reader.unpack(f'<{ndim}I')
        size = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(reader.take(4 * size), dtype='<f4').reshape(shape).astype(np.float32)
    if reader.offset != len(body):
        raise CorruptCheckpoint(f"{path.name}: {len(body) - reader.offset} trailing bytes")

    expected = parameter_shapes(config)
    actual = OrderedDict((k, v.shape) for k, v in tensors.items())
    if list(expected.items()) != list(actual.items()):
        raise CorruptCheckpoint(f"{path.name}: tensor names or shapes do not match the stored config")
    if channels is not None and channels != config.channels:
        raise ShapeMismatch(
            f"Checkpoint was trained on '{config.channels}' patches, got '{channels}' patches",
            payload={"checkpoint": config.channels, "patches": channels},
        )
    return ModelParams(config, tensors)
