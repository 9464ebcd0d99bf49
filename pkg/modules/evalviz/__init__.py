"""
Evaluation and visualization module - BLEU, alignment scores, attention heatmaps.
"""

from .bleu import BleuInputError, BleuReport, bleu, clipped_counts, ngrams, sentence_bleu
from .heatmaps import (
    Heatmap,
    HeatmapShapeError,
    blend_heatmap,
    gaussian_kernel,
    grid_side_of,
    normalize_map,
    render_attention,
    smooth_attention,
)
from .alignment import alignment_score, mean_alignment_score
from .export import ExportResult, export_heatmaps, read_graymap, read_manifest, to_bytes, write_graymap

__all__ = [
    'BleuInputError',
    'BleuReport',
    'bleu',
    'clipped_counts',
    'ngrams',
    'sentence_bleu',
    'Heatmap',
    'HeatmapShapeError',
    'blend_heatmap',
    'gaussian_kernel',
    'grid_side_of',
    'normalize_map',
    'render_attention',
    'smooth_attention',
    'alignment_score',
    'mean_alignment_score',
    'ExportResult',
    'export_heatmaps',
    'read_graymap',
    'read_manifest',
    'to_bytes',
    'write_graymap',
]
