"""
Exact hard-attention objective by enumeration, and Monte Carlo summaries.

All L^C location sequences of one caption are scored in a single batch on
the hard caption graph. With p(s) = exp(log p(s|a)) and ll(s) = log p(y|s,a):

    L_s          = sum_s p(s) ll(s)
    dL_s/dW      = sum_s p(s) dll(s)/dW + p(s) ll(s) dlog p(s|a)/dW
    log p(y|a)   = logsumexp_s(log p(s|a) + ll(s))
"""

import itertools
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from modules.attention import AnnotationGrid
from modules.decoder import HARD, CaptionSequence, DecoderParams, caption_bindings, caption_graph, parameter_gradients
from modules.graphcore import GradientMap, evaluate

from .errors import EnumerationTooLargeError
from .hard import hard_bindings

MAX_TRAJECTORIES = 4096


@dataclass
class ExactObjective:
    value: float
    grads: GradientMap
    log_marginal: float


@dataclass
class Moments:
    mean: np.ndarray
    variance: np.ndarray
    stderr: np.ndarray
    count: int


def trajectories(L: int, C: int) -> np.ndarray:
    """Every location sequence as rows of an [L^C, C] array."""
    if L ** C > MAX_TRAJECTORIES:
        raise EnumerationTooLargeError(f"L^C = {L}^{C} = {L ** C} exceeds {MAX_TRAJECTORIES} trajectories")
    return np.array(list(itertools.product(range(L), repeat=C)), dtype=np.int64).reshape(-1, C)


def _enumerate(grid: AnnotationGrid, caption: CaptionSequence, params: DecoderParams):
    caption.check_vocabulary(params.dims.K)
    paths = trajectories(grid.L, caption.C)
    S = paths.shape[0]
    features = np.repeat(grid.features[np.newaxis], S, axis=0)
    captions = np.repeat(np.array([caption.tokens]), S, axis=0)
    previous = np.repeat(np.array([caption.previous]), S, axis=0)

    cg = caption_graph(params.dims, caption.C, HARD)
    bindings = caption_bindings(features, captions, previous, params.dims)
    bindings.update(hard_bindings(paths, np.zeros(S, dtype=bool), grid.L))
    bindings.update(params.to_blocks())
    evaluation = evaluate(cg.graph, bindings)
    loglik = evaluation[cg.loglik].reshape(S)
    location_logp = evaluation[cg.location_logp].reshape(S)
    return cg, evaluation, loglik, location_logp


def exact_hard_objective(grid: AnnotationGrid, caption: CaptionSequence, params: DecoderParams) -> ExactObjective:
    """
    L_s and its exact gradient for one caption.

    Raises:
        EnumerationTooLargeError: L^C > 4096
    """
    cg, evaluation, loglik, location_logp = _enumerate(grid, caption, params)
    prob = np.exp(location_logp)
    S = prob.size
    seeds = {
        cg.loglik: prob.reshape(S, 1, 1),
        cg.location_logp: (prob * loglik).reshape(S, 1, 1),
    }
    grads = parameter_gradients(cg, evaluation, seeds, params)
    return ExactObjective(
        value=float(prob @ loglik),
        grads=grads,
        log_marginal=float(logsumexp(location_logp + loglik)),
    )


def exact_log_marginal(grid: AnnotationGrid, caption: CaptionSequence, params: DecoderParams) -> float:
    """log p(y|a), marginalizing the attended locations exactly."""
    _, _, loglik, location_logp = _enumerate(grid, caption, params)
    return float(logsumexp(location_logp + loglik))


def location_probabilities(grid: AnnotationGrid, caption: CaptionSequence, params: DecoderParams) -> Tuple[np.ndarray, np.ndarray]:
    """(trajectories [S, C], p(s|a) [S]); the probabilities sum to 1."""
    _, _, _, location_logp = _enumerate(grid, caption, params)
    return trajectories(grid.L, caption.C), np.exp(location_logp)


def estimator_moments(samples: Sequence[GradientMap]) -> Dict[str, Moments]:
    """Per-coordinate sample mean, unbiased variance and standard error of the mean."""
    if len(samples) < 2:
        raise ValueError("Need at least two samples")
    moments: Dict[str, Moments] = {}
    for name in samples[0]:
        stacked = np.stack([sample[name] for sample in samples])
        variance = stacked.var(axis=0, ddof=1)
        moments[name] = Moments(
            mean=stacked.mean(axis=0),
            variance=variance,
            stderr=np.sqrt(variance / len(samples)),
            count=len(samples),
        )
    return moments
