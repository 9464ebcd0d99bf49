"""
Hard-Attention Gradient Estimator

Monte Carlo estimate of the gradient of the lower bound
L_s = sum_s p(s|a) log p(y|s,a). For every sampled trajectory s~ the
estimate accumulates

    d log p(y|s~,a)/dW
    + lambda_r * (log p(y|s~,a) - b) * d log p(s~|a)/dW
    + lambda_e * d H[s~]/dW

averaged over the R = B * N sampled rows. The result is an ascent
direction on L_s; the trainer negates it. With probability
expectation_substitution_prob an image's rows use the expected context
sum_i alpha_i a_i instead of a sample, which removes their score-function
term.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from modules.decoder import HARD, DecoderParams, DecoderSession, caption_bindings, caption_graph, parameter_gradients
from modules.graphcore import GradientMap, evaluate

from .batching import BatchLike, make_batch
from .configs import HardLossConfig
from .losses import dropout_masks

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BaselineState:
    """Moving average b of sampled-trajectory log-likelihoods; k counts updates."""
    b: float = 0.0
    k: int = 0


@dataclass
class GradientEstimate:
    grads: GradientMap
    sample_count: int
    baseline: float
    reward_variance: float
    mean_log_likelihood: float
    substituted: int


def update_baseline(state: BaselineState, log_likelihood: float, decay: float) -> BaselineState:
    """b_k = decay * b_{k-1} + (1 - decay) * log p(y | s~, a)"""
    return BaselineState(b=decay * state.b + (1.0 - decay) * float(log_likelihood), k=state.k + 1)


def sample_locations(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One multinoulli draw per row of [R, L] weights, by inverse CDF."""
    cdf = np.cumsum(weights, axis=-1)
    u = rng.random(weights.shape[0]) * cdf[:, -1]
    return np.minimum((cdf <= u[:, np.newaxis]).sum(axis=-1), weights.shape[-1] - 1)


def rollout_locations(
    params: DecoderParams,
    features: np.ndarray,
    captions: np.ndarray,
    previous: np.ndarray,
    substitute: np.ndarray,
    rng: np.random.Generator
) -> np.ndarray:
    """
    Sample s_1..s_C under teacher forcing for R rows.

    alpha_t depends on earlier locations through h, so locations are drawn
    step by step while the state is advanced with the chosen contexts.
    Substituted rows advance with the expected context and get location -1.

    Returns:
        [R, C] sampled location indices
    """
    session = DecoderSession(params, features, gate=False)
    R, C = captions.shape
    locations = np.full((R, C), -1, dtype=np.int64)
    h, c = session.h0, session.c0
    for t in range(C):
        attended = session.attend(h)
        drawn = sample_locations(attended["weights"][..., 0], rng)
        context = np.where(
            substitute[:, np.newaxis, np.newaxis],
            attended["expected"],
            session.hard_context(drawn),
        )
        locations[:, t] = np.where(substitute, -1, drawn)
        out = session.step(previous[:, t], h, c, context)
        h, c = out["h"], out["c"]
    return locations


def hard_bindings(locations: np.ndarray, substitute: np.ndarray, L: int) -> Dict[str, np.ndarray]:
    """select_t one-hot columns (zero rows where substituted) and the substitute flags."""
    R, C = locations.shape
    bindings = {"substitute": substitute.astype(np.float64).reshape(R, 1, 1)}
    for t in range(C):
        select = np.zeros((R, L, 1))
        sampled = locations[:, t] >= 0
        select[np.flatnonzero(sampled), locations[sampled, t], 0] = 1.0
        bindings[f"select_{t}"] = select
    return bindings


def hard_gradient_estimate(
    batch: BatchLike,
    params: DecoderParams,
    config: Optional[HardLossConfig],
    baseline: BaselineState,
    rng: np.random.Generator,
    update: bool = True
) -> Tuple[GradientEstimate, BaselineState]:
    """
    Variance-reduced score-function estimate for one mini-batch.

    Args:
        batch: Same-length examples (or a Batch)
        params: Decoder parameters
        config: lambda_r, lambda_e, N, substitution probability, baseline decay, dropout
        baseline: Current moving-average baseline
        rng: Seeded source for substitution, locations and dropout
        update: When False the baseline is returned unchanged

    Returns:
        (GradientEstimate, updated BaselineState)
    """
    config = config or HardLossConfig()
    batch = make_batch(batch)
    dims = params.dims
    N = config.sample_count
    image = np.repeat(np.arange(batch.B), N)
    features = batch.features[image]
    captions = batch.captions[image]
    previous = batch.previous[image]
    R, C = captions.shape
    L = features.shape[1]

    substituted_images = rng.random(batch.B) < config.expectation_substitution_prob
    substitute = substituted_images[image]
    locations = rollout_locations(params, features, captions, previous, substitute, rng)

    cg = caption_graph(dims, C, HARD)
    masks = dropout_masks(rng, config.dropout_rate, C, R, dims.n)
    bindings = caption_bindings(features, captions, previous, dims, masks)
    bindings.update(hard_bindings(locations, substitute, L))
    bindings.update(params.to_blocks())
    evaluation = evaluate(cg.graph, bindings)

    loglik = evaluation[cg.loglik].reshape(R)
    coefficient = np.where(substitute, 0.0, config.lambda_r * (loglik - baseline.b))
    seeds = {
        cg.loglik: np.full((R, 1, 1), 1.0 / R),
        cg.location_logp: (coefficient / R).reshape(R, 1, 1),
        cg.entropy: np.full((R, 1, 1), config.lambda_e / R),
    }
    grads = parameter_gradients(cg, evaluation, seeds, params)

    sampled = loglik[~substitute]
    new_baseline = baseline
    if update and sampled.size:
        new_baseline = update_baseline(baseline, float(sampled.mean()), config.baseline_decay)
    elif update:
        new_baseline = BaselineState(b=baseline.b, k=baseline.k + 1)

    estimate = GradientEstimate(
        grads=grads,
        sample_count=R,
        baseline=new_baseline.b,
        reward_variance=float(sampled.var()) if sampled.size > 1 else 0.0,
        mean_log_likelihood=float(loglik.mean()),
        substituted=int(substitute.sum()),
    )
    return estimate, new_baseline
