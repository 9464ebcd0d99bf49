"""
Scenes <-> annotation records.

A scene becomes one record per caption: only its primary caption by
default, or one per valid description with all_references. Records of the
same scene share a byte-identical grid, so reading a file back regroups
them into images with reference sets.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from modules.attention import AnnotationGrid

from .annotation_io import AnnotationDataset, AnnotationRecord
from .encoder import encode_scene
from .scenes import Scene, SceneSpec
from .vocabulary import Vocabulary, encode_caption

logger = logging.getLogger(__name__)


@dataclass
class ImageGroup:
    """All records that share one grid."""
    grid: AnnotationGrid
    records: List[AnnotationRecord] = field(default_factory=list)

    @property
    def references(self) -> List[Tuple[int, ...]]:
        return [record.caption.words for record in self.records]

    @property
    def alignment(self) -> Dict[int, int]:
        return self.records[0].alignment


def build_dataset(
    scenes: Sequence[Scene],
    spec: SceneSpec,
    vocabulary: Vocabulary,
    rng: np.random.Generator,
    all_references: bool = False,
    noise_sigma: Optional[float] = None
) -> AnnotationDataset:
    """Encode scenes; scene i gets its noise from the i-th child stream of rng."""
    records: List[AnnotationRecord] = []
    streams = rng.spawn(len(scenes)) if scenes else []
    for scene, stream in zip(scenes, streams):
        grid = encode_scene(scene, spec, stream, noise_sigma)
        descriptions = scene.descriptions if all_references else scene.descriptions[:1]
        for description in descriptions:
            records.append(AnnotationRecord(
                caption=encode_caption(description.tokens, vocabulary),
                grid=grid,
                alignment=dict(description.alignment),
            ))
    logger.info("Encoded %d scenes into %d records", len(scenes), len(records))
    return AnnotationDataset(L=spec.L, D=spec.feature_dim, K=vocabulary.K, records=records)


def group_records(dataset: AnnotationDataset) -> List[ImageGroup]:
    """Group records with identical grid bytes, in first-seen order."""
    groups: Dict[bytes, ImageGroup] = {}
    for record in dataset.records:
        key = record.grid.features.tobytes()
        if key not in groups:
            groups[key] = ImageGroup(record.grid)
        groups[key].records.append(record)
    return list(groups.values())
