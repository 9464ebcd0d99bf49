"""
Alignment score against ground-truth word-to-cell alignments.
"""

from typing import Any, Mapping, Optional, Sequence

import numpy as np

from modules.attention import AttentionTrace


def alignment_score(trace: AttentionTrace, scene: Any) -> Optional[float]:
    """
    Mean attention mass placed on the ground-truth cell of each aligned word.

    The weights of step t are the ones used to emit word t.

    Args:
        trace: Attention trace of the caption
        scene: Object with an `alignment` mapping (word position -> cell), or the mapping itself

    Returns:
        Score in [0, 1], or None when no aligned word falls inside the trace
    """
    alignment: Mapping[int, int] = getattr(scene, "alignment", scene)
    masses = [
        float(trace.per_step[position].alpha[cell])
        for position, cell in sorted(alignment.items())
        if 0 <= position < len(trace)
    ]
    if not masses:
        return None
    return float(np.mean(masses))


def mean_alignment_score(scores: Sequence[Optional[float]]) -> Optional[float]:
    """Average of the defined scores; None when none is defined."""
    defined = [s for s in scores if s is not None]
    return float(np.mean(defined)) if defined else None
