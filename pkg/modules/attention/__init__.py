"""
Attention module - scores, weights, soft and hard context, entropy.
"""

from .types import (
    ATTENTION_BLOCKS,
    AnnotationGrid,
    AttentionParams,
    AttentionTrace,
    AttentionWeights,
    DimensionMismatchError,
    HardSample,
    block_shapes,
)
from .mechanism import (
    AttentionNodes,
    attention_nodes,
    attention_scores,
    attention_weights,
    entropy_nodes,
    expected_context_nodes,
    gate_nodes,
    hard_sample,
    multinoulli_entropy,
    project_annotations,
    score_nodes,
    select_location,
    soft_context,
    weight_nodes,
)

__all__ = [
    'ATTENTION_BLOCKS',
    'AnnotationGrid',
    'AttentionParams',
    'AttentionTrace',
    'AttentionWeights',
    'DimensionMismatchError',
    'HardSample',
    'block_shapes',
    'AttentionNodes',
    'attention_nodes',
    'attention_scores',
    'attention_weights',
    'entropy_nodes',
    'expected_context_nodes',
    'gate_nodes',
    'hard_sample',
    'multinoulli_entropy',
    'project_annotations',
    'score_nodes',
    'select_location',
    'soft_context',
    'weight_nodes',
]
