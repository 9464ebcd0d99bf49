"""
RMSProp and Adam updates over named parameter blocks.

optimizer_step is a pure function: it returns new parameters and a new state
and never mutates its inputs.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from modules.attention import DimensionMismatchError
from modules.decoder import DecoderParams
from modules.graphcore import GradientMap

from .configs import OptimizerConfig


@dataclass(frozen=True)
class OptimizerState:
    algorithm: str
    learning_rate: float
    rmsprop_decay: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first: Dict[str, np.ndarray] = field(default_factory=dict)  # adam m
    second: Dict[str, np.ndarray] = field(default_factory=dict)  # adam v / rmsprop cache


def init_optimizer_state(params: DecoderParams, config: Optional[OptimizerConfig] = None) -> OptimizerState:
    """Zero accumulators mirroring every parameter block."""
    config = config or OptimizerConfig()
    blocks = params.to_blocks()
    zeros = {name: np.zeros_like(value) for name, value in blocks.items()}
    return OptimizerState(
        algorithm=config.algorithm,
        learning_rate=config.learning_rate,
        rmsprop_decay=config.rmsprop_decay,
        beta1=config.beta1,
        beta2=config.beta2,
        epsilon=config.epsilon,
        first=dict(zeros) if config.algorithm == "adam" else {},
        second={name: np.zeros_like(value) for name, value in blocks.items()},
    )


def optimizer_step(
    params: DecoderParams,
    grads: GradientMap,
    state: OptimizerState
) -> Tuple[DecoderParams, OptimizerState]:
    """
    One descent step along -grads.

    RMSProp:  v = rho v + (1 - rho) g^2;  w -= lr g / (sqrt(v) + eps)
    Adam:     m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2;
              w -= lr m_hat / (sqrt(v_hat) + eps) with bias-corrected moments

    Blocks missing from grads are left unchanged, as are their accumulators.

    Raises:
        DimensionMismatchError: a gradient does not match its block's shape or names an unknown block
    """
    blocks = params.to_blocks()
    unknown = set(grads) - set(blocks)
    if unknown:
        raise DimensionMismatchError(f"Gradients for unknown blocks: {', '.join(sorted(unknown))}")

    step = state.step + 1
    updated: Dict[str, np.ndarray] = {}
    first = dict(state.first)
    second = dict(state.second)
    for name, g in grads.items():
        g = np.asarray(g, dtype=np.float64)
        if g.shape != blocks[name].shape:
            raise DimensionMismatchError(f"Gradient for {name} has shape {g.shape}, parameter {blocks[name].shape}")
        if state.algorithm == "rmsprop":
            cache = state.rmsprop_decay * second[name] + (1.0 - state.rmsprop_decay) * g * g
            second[name] = cache
            updated[name] = blocks[name] - state.learning_rate * g / (np.sqrt(cache) + state.epsilon)
        elif state.algorithm == "adam":
            m = state.beta1 * first[name] + (1.0 - state.beta1) * g
            v = state.beta2 * second[name] + (1.0 - state.beta2) * g * g
            first[name], second[name] = m, v
            m_hat = m / (1.0 - state.beta1 ** step)
            v_hat = v / (1.0 - state.beta2 ** step)
            updated[name] = blocks[name] - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        else:
            raise ValueError(f"Unknown optimizer '{state.algorithm}'")

    return params.replace_blocks(updated), replace(state, step=step, first=first, second=second)


def global_norm(grads: GradientMap) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: GradientMap, threshold: float) -> Tuple[GradientMap, float]:
    """
    Rescale all gradients together when their joint L2 norm exceeds threshold.

    Returns:
        (clipped gradients, norm before clipping)
    """
    if threshold <= 0:
        raise ValueError(f"Clip threshold must be > 0, got {threshold}")
    norm = global_norm(grads)
    if norm <= threshold or not np.isfinite(norm):
        return dict(grads), norm
    factor = threshold / norm
    return {name: g * factor for name, g in grads.items()}, norm
