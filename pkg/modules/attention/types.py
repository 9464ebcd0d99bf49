"""
Attention Domain Types

Value objects shared by the attention mechanism, the decoder and the
visualization code. Arrays are float64 and validated on construction.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

ATTENTION_BLOCKS = ("W_a", "W_h", "b", "v", "beta_w", "beta_b")
BLOCK_PREFIX = "attention."


class DimensionMismatchError(ValueError):
    """An array does not have the size the model dimensions require."""


@dataclass(frozen=True, eq=False)
class AnnotationGrid:
    """L x D matrix of per-location feature vectors."""
    features: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise DimensionMismatchError(f"AnnotationGrid needs an L x D matrix, got shape {features.shape}")
        if not np.all(np.isfinite(features)):
            raise ValueError("AnnotationGrid features must be finite")
        object.__setattr__(self, "features", features)

    @property
    def L(self) -> int:
        return self.features.shape[0]

    @property
    def D(self) -> int:
        return self.features.shape[1]

    @property
    def grid_side(self) -> Optional[int]:
        """Side g of a square g x g layout, or None when L is not a perfect square."""
        side = math.isqrt(self.L)
        return side if side * side == self.L else None


@dataclass(frozen=True, eq=False)
class AttentionWeights:
    """Normalized attention over L locations."""
    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64).reshape(-1)
        if alpha.size < 1 or np.any(alpha < 0.0) or np.any(alpha > 1.0):
            raise ValueError("Attention weights must lie in [0, 1]")
        if abs(float(alpha.sum()) - 1.0) > 1e-9:
            raise ValueError(f"Attention weights must sum to 1, got {alpha.sum():.12f}")
        object.__setattr__(self, "alpha", alpha)

    @property
    def L(self) -> int:
        return self.alpha.size

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.alpha))


@dataclass
class AttentionTrace:
    """Per-timestep attention of one generated or teacher-forced caption."""
    per_step: List[AttentionWeights] = field(default_factory=list)
    sampled_locations: Optional[List[int]] = None
    betas: Optional[List[float]] = None

    def __post_init__(self):
        if self.sampled_locations is not None:
            for location in self.sampled_locations:
                if self.per_step and not 0 <= location < self.per_step[0].L:
                    raise ValueError(f"Sampled location {location} outside [0, {self.per_step[0].L})")

    def __len__(self) -> int:
        return len(self.per_step)

    def matrix(self) -> np.ndarray:
        """C x L matrix of weights, one row per timestep."""
        if not self.per_step:
            return np.zeros((0, 0))
        return np.stack([w.alpha for w in self.per_step])

    def column_sums(self) -> np.ndarray:
        """Total attention each location receives over the caption."""
        return self.matrix().sum(axis=0)


@dataclass(frozen=True, eq=False)
class AttentionParams:
    """
    Weights of the attention MLP and of the gating scalar.

    Right-multiply layout: scores are tanh(a_i W_a + b + h W_h) v and the gate
    is sigmoid(h beta_w + beta_b).
    """
    W_a: np.ndarray  # [D, A]
    W_h: np.ndarray  # [n, A]
    b: np.ndarray  # [A]
    v: np.ndarray  # [A, 1]
    beta_w: np.ndarray  # [n, 1]
    beta_b: np.ndarray  # [1]

    def __post_init__(self):
        for name in ATTENTION_BLOCKS:
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        D, A = self.W_a.shape
        n = self.W_h.shape[0]
        expected = {
            "W_a": (D, A), "W_h": (n, A), "b": (A,), "v": (A, 1), "beta_w": (n, 1), "beta_b": (1,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionMismatchError(
                    f"attention.{name} has shape {getattr(self, name).shape}, expected {shape}"
                )

    @property
    def D(self) -> int:
        return self.W_a.shape[0]

    @property
    def A(self) -> int:
        return self.W_a.shape[1]

    @property
    def n(self) -> int:
        return self.W_h.shape[0]

    @classmethod
    def zeros(cls, D: int, n: int, A: int) -> "AttentionParams":
        return cls(
            W_a=np.zeros((D, A)), W_h=np.zeros((n, A)), b=np.zeros(A),
            v=np.zeros((A, 1)), beta_w=np.zeros((n, 1)), beta_b=np.zeros(1),
        )

    @classmethod
    def initialize(cls, D: int, n: int, A: int, rng: np.random.Generator, scale: float = 0.1) -> "AttentionParams":
        """Gaussian weights with standard deviation `scale`, zero biases."""
        return cls(
            W_a=rng.normal(0.0, scale, (D, A)),
            W_h=rng.normal(0.0, scale, (n, A)),
            b=np.zeros(A),
            v=rng.normal(0.0, scale, (A, 1)),
            beta_w=rng.normal(0.0, scale, (n, 1)),
            beta_b=np.zeros(1),
        )

    def to_blocks(self) -> Dict[str, np.ndarray]:
        return {BLOCK_PREFIX + name: getattr(self, name) for name in ATTENTION_BLOCKS}

    @classmethod
    def from_blocks(cls, blocks: Dict[str, np.ndarray]) -> "AttentionParams":
        missing = [BLOCK_PREFIX + name for name in ATTENTION_BLOCKS if BLOCK_PREFIX + name not in blocks]
        if missing:
            raise DimensionMismatchError(f"Missing attention blocks: {', '.join(missing)}")
        return cls(**{name: blocks[BLOCK_PREFIX + name] for name in ATTENTION_BLOCKS})


class HardSample(NamedTuple):
    """One draw of the stochastic attention location."""
    location: int
    one_hot: np.ndarray
    context: np.ndarray


def block_shapes(D: int, n: int, A: int) -> Dict[str, Tuple[int, ...]]:
    """Attention block name -> shape for the given dimensions."""
    return {
        BLOCK_PREFIX + "W_a": (D, A),
        BLOCK_PREFIX + "W_h": (n, A),
        BLOCK_PREFIX + "b": (A,),
        BLOCK_PREFIX + "v": (A, 1),
        BLOCK_PREFIX + "beta_w": (n, 1),
        BLOCK_PREFIX + "beta_b": (1,),
    }
