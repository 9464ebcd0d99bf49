"""
Parameter Checkpoint File

Layout (all integers little-endian):

    magic    8 bytes  b"ATTNCKPT"
    version  u32
    sections until end of file, in DecoderParams.to_blocks() order:
        name length u16, name bytes (utf-8), rank u8, dims u32 each,
        data as little-endian float64, row-major

Writing is deterministic, so identical parameters give byte-identical files.
"""

import struct
from pathlib import Path
from typing import Dict, Union

import numpy as np

from .params import DecoderParams

MAGIC = b"ATTNCKPT"
VERSION = 1


class CheckpointFormatError(ValueError):
    """The checkpoint file cannot be decoded."""


class CheckpointMagicError(CheckpointFormatError):
    pass


class CheckpointVersionError(CheckpointFormatError):
    pass


class CheckpointTruncatedError(CheckpointFormatError):
    pass


def encode_checkpoint(params: DecoderParams) -> bytes:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name, value in params.to_blocks().items():
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<B", value.ndim))
        chunks.append(struct.pack(f"<{value.ndim}I", *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    return b"".join(chunks)


def _take(data: bytes, offset: int, size: int, what: str) -> bytes:
    if offset + size > len(data):
        raise CheckpointTruncatedError(f"Checkpoint truncated while reading {what} at byte {offset}")
    return data[offset:offset + size]


def decode_checkpoint(data: bytes) -> Dict[str, np.ndarray]:
    """
    Parse checkpoint bytes into named float64 arrays.

    Raises:
        CheckpointMagicError: file does not start with ATTNCKPT
        CheckpointVersionError: unsupported version
        CheckpointTruncatedError: a section ends early
    """
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointMagicError(f"Bad magic {data[:len(MAGIC)]!r}, expected {MAGIC!r}")
    offset = len(MAGIC)
    (version,) = struct.unpack("<I", _take(data, offset, 4, "version"))
    offset += 4
    if version != VERSION:
        raise CheckpointVersionError(f"Checkpoint version {version} not supported (expected {VERSION})")

    blocks: Dict[str, np.ndarray] = {}
    while offset < len(data):
        (name_len,) = struct.unpack("<H", _take(data, offset, 2, "name length"))
        offset += 2
        name = _take(data, offset, name_len, "name").decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack("<B", _take(data, offset, 1, f"rank of {name}"))
        offset += 1
        shape = struct.unpack(f"<{rank}I", _take(data, offset, 4 * rank, f"dims of {name}"))
        offset += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        raw = _take(data, offset, 8 * count, f"data of {name}")
        offset += 8 * count
        blocks[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    return blocks


def save_checkpoint(params: DecoderParams, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(params))
    return path


def load_checkpoint(path: Union[str, Path]) -> DecoderParams:
    """Read a checkpoint; dimensions are inferred from the stored block shapes."""
    return DecoderParams.from_blocks(decode_checkpoint(Path(path).read_bytes()))
