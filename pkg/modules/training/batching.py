"""
Training examples, mini-batches and length-bucketed batch order.
"""

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from modules.attention import AnnotationGrid
from modules.decoder import CaptionSequence

from .errors import MixedLengthBatchError


@dataclass(frozen=True)
class TrainingExample:
    """One image with its training caption, BLEU references and word alignment."""
    grid: AnnotationGrid
    caption: CaptionSequence
    references: Tuple[Tuple[int, ...], ...] = ()
    alignment: Mapping[int, int] = field(default_factory=dict)

    @property
    def reference_words(self) -> Tuple[Tuple[int, ...], ...]:
        return self.references or (self.caption.words,)


@dataclass(frozen=True, eq=False)
class Batch:
    features: np.ndarray  # [B, L, D]
    captions: np.ndarray  # [B, C]

    @property
    def B(self) -> int:
        return self.captions.shape[0]

    @property
    def C(self) -> int:
        return self.captions.shape[1]

    @property
    def previous(self) -> np.ndarray:
        """Teacher-forcing inputs: BOS then the caption shifted right."""
        prev = np.zeros_like(self.captions)
        prev[:, 1:] = self.captions[:, :-1]
        return prev


BatchLike = Union[Batch, Sequence[TrainingExample], Sequence[Tuple[AnnotationGrid, CaptionSequence]]]


def make_batch(examples: BatchLike) -> Batch:
    """
    Stack examples into arrays.

    Raises:
        MixedLengthBatchError: captions differ in length
        ValueError: empty batch or grids of different shape
    """
    if isinstance(examples, Batch):
        return examples
    if not examples:
        raise ValueError("Cannot build an empty batch")
    pairs = [(ex.grid, ex.caption) if isinstance(ex, TrainingExample) else tuple(ex) for ex in examples]
    lengths = sorted({caption.C for _, caption in pairs})
    if len(lengths) > 1:
        raise MixedLengthBatchError(f"Batch mixes caption lengths {lengths}")
    shapes = {grid.features.shape for grid, _ in pairs}
    if len(shapes) > 1:
        raise ValueError(f"Batch mixes grid shapes {sorted(shapes)}")
    features = np.stack([grid.features for grid, _ in pairs])
    captions = np.array([caption.tokens for _, caption in pairs], dtype=np.int64)
    return Batch(features, captions)


def length_buckets(examples: Sequence[TrainingExample]) -> Dict[int, List[int]]:
    """Caption length -> example indices, in corpus order."""
    buckets: Dict[int, List[int]] = defaultdict(list)
    for index, example in enumerate(examples):
        buckets[example.caption.C].append(index)
    return dict(sorted(buckets.items()))


def bucket_batches(
    corpus: Sequence[TrainingExample],
    batch_size: int = 64,
    rng: Optional[np.random.Generator] = None
) -> Iterator[List[TrainingExample]]:
    """
    One epoch of same-length mini-batches.

    Each length bucket is shuffled and cut into chunks of batch_size (the
    last chunk may be smaller); the order of chunks across lengths is then
    shuffled, so each batch is a random length's next mini-batch.

    Args:
        corpus: Training examples (non-empty)
        batch_size: Maximum batch size
        rng: Seeded random source

    Yields:
        Lists of examples sharing one caption length
    """
    if not corpus:
        raise ValueError("Corpus is empty")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if rng is None:
        raise ValueError("bucket_batches needs a seeded random generator")
    chunks: List[List[int]] = []
    for indices in length_buckets(corpus).values():
        order = rng.permutation(indices)
        chunks.extend(order[start:start + batch_size].tolist() for start in range(0, len(order), batch_size))
    for chunk_index in rng.permutation(len(chunks)):
        yield [corpus[i] for i in chunks[chunk_index]]
