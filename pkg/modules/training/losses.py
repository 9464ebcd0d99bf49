"""
Soft-Attention Loss

L_d = mean over the batch of [-sum_t log p(y_t | y_<t, a) + lambda * sum_i (1 - sum_t alpha_ti)^2],
evaluated on the unrolled caption graph and differentiated in one reverse pass.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from modules.decoder import SOFT, DecoderParams, caption_bindings, caption_graph, parameter_gradients
from modules.graphcore import GradientMap, evaluate

from .batching import BatchLike, make_batch
from .configs import SoftLossConfig


@dataclass
class AttentionStats:
    """Batch means of the attention the loss was computed with."""
    coverage: np.ndarray  # [L] mean over the batch of sum_t alpha_ti
    mean_beta: Optional[float]
    alpha: np.ndarray  # [C, L] batch-mean weights per step


@dataclass
class SoftLossResult:
    loss: float
    nll: float
    penalty: float
    grads: GradientMap
    stats: AttentionStats


def dropout_masks(rng: Optional[np.random.Generator], rate: float, C: int, B: int, n: int) -> Optional[np.ndarray]:
    """Inverted-dropout masks [C, B, 1, n]; None when dropout is off."""
    if rng is None or rate <= 0.0:
        return None
    keep = rng.random((C, B, 1, n)) >= rate
    return keep / (1.0 - rate)


def soft_loss(
    batch: BatchLike,
    params: DecoderParams,
    config: Optional[SoftLossConfig] = None,
    rng: Optional[np.random.Generator] = None,
    gate: bool = True
) -> SoftLossResult:
    """
    Penalized negative log-likelihood and its exact gradient.

    Args:
        batch: Same-length examples (or a Batch)
        params: Decoder parameters
        config: Penalty weight and dropout rate
        rng: Source for dropout masks; dropout is off without it
        gate: False fixes beta to 1

    Returns:
        SoftLossResult with the loss, its NLL and penalty parts, gradients for
        every parameter block and attention statistics

    Raises:
        MixedLengthBatchError: captions differ in length
    """
    config = config or SoftLossConfig()
    batch = make_batch(batch)
    dims = params.dims
    cg = caption_graph(dims, batch.C, SOFT, gate)

    masks = dropout_masks(rng, config.dropout_rate, batch.C, batch.B, dims.n)
    bindings = caption_bindings(batch.features, batch.captions, batch.previous, dims, masks)
    bindings["lambda_penalty"] = np.array([config.lambda_penalty])
    bindings.update(params.to_blocks())

    evaluation = evaluate(cg.graph, bindings)
    grads = parameter_gradients(cg, evaluation, {cg.loss: 1.0}, params)

    alpha = np.stack([evaluation[node][..., 0].mean(axis=0) for node in cg.alphas])
    betas = [float(evaluation[node].mean()) for node in cg.betas]
    stats = AttentionStats(
        coverage=alpha.sum(axis=0),
        mean_beta=float(np.mean(betas)) if betas else None,
        alpha=alpha,
    )
    return SoftLossResult(
        loss=float(evaluation[cg.loss][0]),
        nll=float(-evaluation[cg.loglik].mean()),
        penalty=float(evaluation[cg.penalty].mean()),
        grads=grads,
        stats=stats,
    )
