"""
Per-location output distributions for a frozen decoder state.

For one step, running the cell with each annotation a_i as the context gives
per-location logits n_i and word distributions p_i. The normalized weighted
geometric mean of the p_i under alpha equals the softmax of the
alpha-expected logits; the arithmetic mean is the exact one-step marginal
over attended locations.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from modules.attention import AnnotationGrid

from .cell import DecoderSession, DecoderState
from .params import DecoderParams


@dataclass(frozen=True, eq=False)
class LocationMarginals:
    alpha: np.ndarray  # [L]
    logits: np.ndarray  # [L, K] logits with context a_i
    distributions: np.ndarray  # [L, K]

    @property
    def nwgm(self) -> np.ndarray:
        """prod_i p_i^alpha_i renormalized over the vocabulary."""
        log_mean = self.alpha @ np.log(self.distributions)
        return np.exp(log_mean - logsumexp(log_mean))

    @property
    def expected_logit_distribution(self) -> np.ndarray:
        return softmax(self.alpha @ self.logits)

    @property
    def marginal(self) -> np.ndarray:
        """sum_i alpha_i p_i"""
        return self.alpha @ self.distributions


def location_marginals(
    grid: AnnotationGrid,
    state: DecoderState,
    prev_token: int,
    params: DecoderParams
) -> LocationMarginals:
    """
    Evaluate one step once per location, each with beta = 1 and context a_i.

    Args:
        grid: Annotation vectors
        state: State before the step
        prev_token: y_{t-1}
        params: Decoder parameters

    Returns:
        LocationMarginals holding alpha and the per-location logits
    """
    L = grid.L
    n = params.dims.n
    session = DecoderSession(params, grid.features[np.newaxis], gate=False)
    h = np.asarray(state.h, dtype=np.float64).reshape(1, 1, n)
    c = np.asarray(state.c, dtype=np.float64).reshape(1, 1, n)
    alpha = session.attend(h)["weights"].reshape(-1)

    rows = np.zeros(L, dtype=np.int64)
    out = session.step(
        np.full(L, prev_token),
        np.repeat(h, L, axis=0),
        np.repeat(c, L, axis=0),
        session.hard_context(np.arange(L), rows),
    )
    return LocationMarginals(alpha=alpha, logits=out["logits"][:, 0, :], distributions=out["probs"][:, 0, :])


def nwgm_distribution(grid: AnnotationGrid, state: DecoderState, prev_token: int, params: DecoderParams) -> np.ndarray:
    return location_marginals(grid, state, prev_token, params).nwgm


def marginal_step_distribution(grid: AnnotationGrid, state: DecoderState, prev_token: int, params: DecoderParams) -> np.ndarray:
    return location_marginals(grid, state, prev_token, params).marginal
