"""
Decoder Parameters

All learned tensors of the caption model in right-multiply layout (inputs are
rows, weights are [in, out]):

    E           [K, m]          word embedding
    lstm_W      [m+n+D, 4n]     stacked affine over [E y; h; z], gate blocks i, f, o, g
    lstm_b      [4n]
    init_c_*    D -> n -> n     tanh MLP predicting c_0 from the mean annotation
    init_h_*    D -> n -> n     tanh MLP predicting h_0 from the mean annotation
    L_o         [m, K]          deep output projection
    L_h         [n, m]
    L_z         [D, m]
    attention   AttentionParams
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from modules.attention import AttentionParams, DimensionMismatchError, block_shapes as attention_shapes

DECODER_BLOCKS = (
    "E", "lstm_W", "lstm_b",
    "init_c_W1", "init_c_b1", "init_c_W2", "init_c_b2",
    "init_h_W1", "init_h_b1", "init_h_W2", "init_h_b2",
    "L_o", "L_h", "L_z",
)


class ModelDims(BaseModel):
    """Vocabulary size K, embedding m, hidden n, feature D and attention hidden A."""
    model_config = ConfigDict(frozen=True)

    K: int = Field(..., ge=1)
    m: int = Field(..., ge=1)
    n: int = Field(..., ge=1)
    D: int = Field(..., ge=1)
    A: int = Field(..., ge=1)

    @classmethod
    def of(cls, K: int, m: int, n: int, D: int, A: Optional[int] = None) -> "ModelDims":
        return cls(K=K, m=m, n=n, D=D, A=n if A is None else A)


def block_shapes(dims: ModelDims) -> Dict[str, Tuple[int, ...]]:
    """Every parameter block name -> expected shape, decoder blocks first."""
    K, m, n, D = dims.K, dims.m, dims.n, dims.D
    shapes = {
        "E": (K, m),
        "lstm_W": (m + n + D, 4 * n),
        "lstm_b": (4 * n,),
        "init_c_W1": (D, n), "init_c_b1": (n,), "init_c_W2": (n, n), "init_c_b2": (n,),
        "init_h_W1": (D, n), "init_h_b1": (n,), "init_h_W2": (n, n), "init_h_b2": (n,),
        "L_o": (m, K),
        "L_h": (n, m),
        "L_z": (D, m),
    }
    shapes.update(attention_shapes(D, n, dims.A))
    return shapes


@dataclass(frozen=True, eq=False)
class DecoderParams:
    E: np.ndarray
    lstm_W: np.ndarray
    lstm_b: np.ndarray
    init_c_W1: np.ndarray
    init_c_b1: np.ndarray
    init_c_W2: np.ndarray
    init_c_b2: np.ndarray
    init_h_W1: np.ndarray
    init_h_b1: np.ndarray
    init_h_W2: np.ndarray
    init_h_b2: np.ndarray
    L_o: np.ndarray
    L_h: np.ndarray
    L_z: np.ndarray
    attention: AttentionParams

    def __post_init__(self):
        for name in DECODER_BLOCKS:
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        expected = block_shapes(self.dims)
        for name in DECODER_BLOCKS:
            if getattr(self, name).shape != expected[name]:
                raise DimensionMismatchError(
                    f"{name} has shape {getattr(self, name).shape}, expected {expected[name]} for {self.dims}"
                )
        if self.attention.D != self.dims.D or self.attention.n != self.dims.n:
            raise DimensionMismatchError(
                f"Attention block dims (D={self.attention.D}, n={self.attention.n}) do not match decoder {self.dims}"
            )

    @property
    def dims(self) -> ModelDims:
        K, m = self.E.shape
        return ModelDims(K=K, m=m, n=self.lstm_b.shape[0] // 4, D=self.L_z.shape[0], A=self.attention.A)

    def to_blocks(self) -> Dict[str, np.ndarray]:
        """Block name -> array, in checkpoint order."""
        blocks = {name: getattr(self, name) for name in DECODER_BLOCKS}
        blocks.update(self.attention.to_blocks())
        return blocks

    @classmethod
    def from_blocks(cls, blocks: Dict[str, np.ndarray]) -> "DecoderParams":
        missing = [name for name in DECODER_BLOCKS if name not in blocks]
        if missing:
            raise DimensionMismatchError(f"Missing parameter blocks: {', '.join(missing)}")
        return cls(attention=AttentionParams.from_blocks(blocks), **{name: blocks[name] for name in DECODER_BLOCKS})

    def replace_blocks(self, updates: Dict[str, np.ndarray]) -> "DecoderParams":
        blocks = self.to_blocks()
        unknown = set(updates) - set(blocks)
        if unknown:
            raise DimensionMismatchError(f"Unknown parameter blocks: {', '.join(sorted(unknown))}")
        blocks.update(updates)
        return DecoderParams.from_blocks(blocks)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(value)) for value in self.to_blocks().values())

    def parameter_count(self) -> int:
        return sum(value.size for value in self.to_blocks().values())


def init_params(dims: ModelDims, rng: np.random.Generator, scale: float = 0.1) -> DecoderParams:
    """
    Gaussian initialisation with standard deviation `scale`; biases start at zero.

    Args:
        dims: Model dimensions
        rng: Seeded random source
        scale: Weight standard deviation

    Returns:
        DecoderParams
    """
    blocks = {}
    for name, shape in block_shapes(dims).items():
        is_bias = name.endswith(("_b", "_b1", "_b2", ".b", ".beta_b"))
        blocks[name] = np.zeros(shape) if is_bias else rng.normal(0.0, scale, shape)
    return DecoderParams.from_blocks(blocks)


def zero_params(dims: ModelDims) -> DecoderParams:
    return DecoderParams.from_blocks({name: np.zeros(shape) for name, shape in block_shapes(dims).items()})
