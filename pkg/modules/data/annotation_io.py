"""
Annotation Dataset File

Any encoder that produces L x D grids can feed the decoder through this
format. Layout (all integers little-endian):

    magic         8 bytes  b"ATTNDATA"
    version       u32
    record_count  u32
    L, D, K       u32 each
    per record:
        caption_len u16, caption indices u32 each (EOS included)
        grid        L*D float64, row-major
        align_len   u16, then (word_pos u16, cell u16) pairs
"""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from modules.attention import AnnotationGrid, DimensionMismatchError
from modules.decoder import CaptionSequence

logger = logging.getLogger(__name__)

MAGIC = b"ATTNDATA"
VERSION = 1
_HEADER = struct.Struct("<5I")


class AnnotationFormatError(ValueError):
    """The annotation file cannot be decoded."""


class BadMagicError(AnnotationFormatError):
    pass


class VersionMismatchError(AnnotationFormatError):
    pass


class TruncatedFileError(AnnotationFormatError):
    pass


class NonFiniteDataError(AnnotationFormatError):
    pass


@dataclass(frozen=True)
class AnnotationRecord:
    caption: CaptionSequence
    grid: AnnotationGrid
    alignment: Dict[int, int] = field(default_factory=dict)


@dataclass
class AnnotationDataset:
    L: int
    D: int
    K: int
    records: List[AnnotationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def validate(self) -> None:
        """
        Raises:
            DimensionMismatchError: a record disagrees with the header dimensions
        """
        for i, record in enumerate(self.records):
            if record.grid.features.shape != (self.L, self.D):
                raise DimensionMismatchError(
                    f"Record {i}: grid shape {record.grid.features.shape} != ({self.L}, {self.D})"
                )
            if max(record.caption.tokens) >= self.K:
                raise DimensionMismatchError(f"Record {i}: token index >= K={self.K}")
            if any(not 0 <= cell < self.L for cell in record.alignment.values()):
                raise DimensionMismatchError(f"Record {i}: alignment cell outside [0, {self.L})")


def encode_annotations(dataset: AnnotationDataset) -> bytes:
    dataset.validate()
    chunks = [MAGIC, _HEADER.pack(VERSION, len(dataset.records), dataset.L, dataset.D, dataset.K)]
    for record in dataset.records:
        tokens = record.caption.tokens
        chunks.append(struct.pack(f"<H{len(tokens)}I", len(tokens), *tokens))
        chunks.append(np.ascontiguousarray(record.grid.features, dtype="<f8").tobytes())
        pairs = sorted(record.alignment.items())
        flat = [value for pair in pairs for value in pair]
        chunks.append(struct.pack(f"<H{len(flat)}H", len(pairs), *flat))
    return b"".join(chunks)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise TruncatedFileError(f"Annotation file truncated while reading {what} at byte {self.offset}")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_annotations(data: bytes) -> AnnotationDataset:
    """
    Parse annotation bytes.

    Raises:
        BadMagicError: file does not start with ATTNDATA
        VersionMismatchError: unsupported version
        TruncatedFileError: the file ends before the declared records do
        NonFiniteDataError: a grid holds NaN or Inf
        AnnotationFormatError: malformed record or trailing bytes
    """
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"Bad magic {data[:len(MAGIC)]!r}, expected {MAGIC!r}")
    cursor = _Cursor(data)
    cursor.take(len(MAGIC), "magic")
    (version,) = cursor.unpack("<I", "version")
    if version != VERSION:
        raise VersionMismatchError(f"Annotation file version {version} not supported (expected {VERSION})")
    count, L, D, K = cursor.unpack("<4I", "header")

    records = []
    for i in range(count):
        (caption_len,) = cursor.unpack("<H", f"caption length of record {i}")
        tokens = cursor.unpack(f"<{caption_len}I", f"caption of record {i}")
        raw = cursor.take(8 * L * D, f"grid of record {i}")
        features = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(L, D)
        if not np.all(np.isfinite(features)):
            raise NonFiniteDataError(f"Record {i} grid contains NaN or Inf")
        (align_len,) = cursor.unpack("<H", f"alignment length of record {i}")
        flat = cursor.unpack(f"<{2 * align_len}H", f"alignment of record {i}")
        try:
            caption = CaptionSequence(tokens)
        except ValueError as e:
            raise AnnotationFormatError(f"Record {i}: {e}") from e
        records.append(AnnotationRecord(caption, AnnotationGrid(features), dict(zip(flat[::2], flat[1::2]))))

    if cursor.offset != len(data):
        raise AnnotationFormatError(f"{len(data) - cursor.offset} trailing bytes after {count} records")
    return AnnotationDataset(L=L, D=D, K=K, records=records)


def write_annotations(dataset: AnnotationDataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_annotations(dataset))
    logger.info("Wrote %d records to %s", len(dataset.records), path)
    return path


def read_annotations(path: Union[str, Path]) -> AnnotationDataset:
    dataset = decode_annotations(Path(path).read_bytes())
    logger.info("Read %d records (L=%d, D=%d, K=%d) from %s", len(dataset.records), dataset.L, dataset.D, dataset.K, path)
    return dataset
