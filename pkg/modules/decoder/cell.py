"""
Conditional LSTM Decoder

Graph builders for state initialisation, the gated LSTM update and the deep
output layer, the cached programs that evaluate them, and the eager
single-example operations on top.

State rows are [..., 1, n]; previous words enter as one-hot rows [..., 1, K].
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional, Tuple

import numpy as np

from modules.attention import (
    AnnotationGrid,
    AttentionWeights,
    DimensionMismatchError,
    attention_nodes,
    project_annotations,
    select_location,
    soft_context,
)
from modules.graphcore import Graph, Node, Program

from .params import DecoderParams

SOFT = "soft"
HARD = "hard"
MODES = (SOFT, HARD)


@dataclass(frozen=True, eq=False)
class DecoderState:
    h: np.ndarray
    c: np.ndarray
    t: int = 0


class DecodeStep(NamedTuple):
    distribution: np.ndarray
    state: DecoderState
    weights: AttentionWeights
    location: Optional[int]
    beta: Optional[float]


# ----------------------------------------------------------------------
# Graph builders
# ----------------------------------------------------------------------

def embed_nodes(graph: Graph, prev_onehot: Node) -> Node:
    return graph.matmul(prev_onehot, graph.parameter("E"), label="embedding")


def _init_mlp(graph: Graph, mean: Node, prefix: str) -> Node:
    hidden = graph.tanh(graph.add(graph.matmul(mean, graph.parameter(prefix + "W1")), graph.parameter(prefix + "b1")))
    return graph.tanh(graph.add(graph.matmul(hidden, graph.parameter(prefix + "W2")), graph.parameter(prefix + "b2")))


def init_state_nodes(graph: Graph, features: Node) -> Tuple[Node, Node]:
    """h_0 and c_0 from two tanh MLPs over the mean annotation."""
    mean = graph.mean(features, axis=-2, keepdims=True)
    return _init_mlp(graph, mean, "init_h_"), _init_mlp(graph, mean, "init_c_")


def lstm_nodes(graph: Graph, n: int, embedded: Node, h: Node, c: Node, context: Node) -> Tuple[Node, Node]:
    """
    One LSTM update over the stacked affine map of [E y; h; z].

    Gate blocks of the pre-activation are i, f, o, g in that order.

    Returns:
        (h_t, c_t)
    """
    stacked = graph.concat([embedded, h, context], axis=-1)
    pre = graph.add(graph.matmul(stacked, graph.parameter("lstm_W")), graph.parameter("lstm_b"))
    i = graph.sigmoid(graph.slice(pre, 0, n), label="gate.i")
    f = graph.sigmoid(graph.slice(pre, n, 2 * n), label="gate.f")
    o = graph.sigmoid(graph.slice(pre, 2 * n, 3 * n), label="gate.o")
    g = graph.tanh(graph.slice(pre, 3 * n, 4 * n), label="gate.g")
    c_new = graph.add(graph.multiply(f, c), graph.multiply(i, g), label="c")
    h_new = graph.multiply(o, graph.tanh(c_new), label="h")
    return h_new, c_new


def deep_output_nodes(
    graph: Graph,
    embedded: Node,
    h: Node,
    context: Node,
    dropout_mask: Optional[Node] = None
) -> Tuple[Node, Node]:
    """
    logits = (E y_{t-1} + h L_h + z L_z) L_o; no nonlinearity before L_o.

    dropout_mask, when given, multiplies h before the L_h projection.

    Returns:
        (logits, probabilities) as [..., 1, K] rows
    """
    hidden = h if dropout_mask is None else graph.multiply(h, dropout_mask)
    summed = graph.add(
        graph.add(embedded, graph.matmul(hidden, graph.parameter("L_h"))),
        graph.matmul(context, graph.parameter("L_z")),
    )
    logits = graph.matmul(summed, graph.parameter("L_o"), label="logits")
    return logits, graph.softmax(logits, axis=-1, label="probs")


# ----------------------------------------------------------------------
# Cached programs
# ----------------------------------------------------------------------

@lru_cache(maxsize=None)
def init_program() -> Program:
    graph = Graph("decoder_init")
    features = graph.input("features")
    h0, c0 = init_state_nodes(graph, features)
    return Program(graph, {"h": h0, "c": c0, "projected": project_annotations(graph, features)})


@lru_cache(maxsize=None)
def attend_program(gate: bool) -> Program:
    graph = Graph("decoder_attend")
    nodes = attention_nodes(graph, graph.input("features"), graph.input("projected"), graph.input("h"), gate)
    outputs = {"weights": nodes.weights, "expected": nodes.expected, "context": nodes.context}
    if nodes.beta is not None:
        outputs["beta"] = nodes.beta
    return Program(graph, outputs)


@lru_cache(maxsize=None)
def step_program(n: int) -> Program:
    graph = Graph("decoder_step")
    embedded = embed_nodes(graph, graph.input("prev"))
    context = graph.input("context")
    h, c = lstm_nodes(graph, n, embedded, graph.input("h"), graph.input("c"), context)
    logits, probs = deep_output_nodes(graph, embedded, h, context)
    return Program(graph, {"h": h, "c": c, "logits": logits, "probs": probs})


@lru_cache(maxsize=None)
def lstm_program(n: int) -> Program:
    graph = Graph("lstm_step")
    h, c = lstm_nodes(graph, n, graph.input("embedded"), graph.input("h"), graph.input("c"), graph.input("context"))
    return Program(graph, {"h": h, "c": c})


@lru_cache(maxsize=None)
def output_program() -> Program:
    graph = Graph("output_distribution")
    logits, probs = deep_output_nodes(
        graph, embed_nodes(graph, graph.input("prev")), graph.input("h"), graph.input("context")
    )
    return Program(graph, {"logits": logits, "probs": probs})


def one_hot_rows(tokens: np.ndarray, K: int) -> np.ndarray:
    """[B] token indices -> [B, 1, K] one-hot rows."""
    tokens = np.asarray(tokens, dtype=np.int64).reshape(-1)
    if tokens.size and (tokens.min() < 0 or tokens.max() >= K):
        raise ValueError(f"Token index out of range for K={K}: {tokens.tolist()}")
    rows = np.zeros((tokens.size, 1, K))
    rows[np.arange(tokens.size), 0, tokens] = 1.0
    return rows


class DecoderSession:
    """
    Runs the cached decoder programs for a batch of B annotation grids.

    The annotation projection and the initial state are computed once on
    construction.
    """

    def __init__(self, params: DecoderParams, features: np.ndarray, gate: bool = True):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 3 or features.shape[-1] != params.dims.D:
            raise DimensionMismatchError(
                f"Expected features of shape [B, L, {params.dims.D}], got {features.shape}"
            )
        self.params = params
        self.dims = params.dims
        self.gate = gate
        self.features = features
        self.blocks = params.to_blocks()
        out = init_program().run({"features": features, **self.blocks})
        self.projected = out["projected"]
        self.h0 = out["h"]
        self.c0 = out["c"]

    @property
    def batch_size(self) -> int:
        return self.features.shape[0]

    def attend(self, h: np.ndarray, rows: Optional[np.ndarray] = None) -> dict:
        """Attention outputs for hidden states h [R, 1, n]; rows maps each state to its grid."""
        features, projected = self.features, self.projected
        if rows is not None:
            features, projected = features[rows], projected[rows]
        return attend_program(self.gate).run({"features": features, "projected": projected, "h": h, **self.blocks})

    def hard_context(self, locations: np.ndarray, rows: Optional[np.ndarray] = None) -> np.ndarray:
        """Selected annotation rows as [R, 1, D] contexts."""
        rows = np.arange(self.batch_size) if rows is None else rows
        return self.features[rows, np.asarray(locations, dtype=np.int64)][:, np.newaxis, :]

    def step(self, prev_tokens: np.ndarray, h: np.ndarray, c: np.ndarray, context: np.ndarray) -> dict:
        bindings = {"prev": one_hot_rows(prev_tokens, self.dims.K), "h": h, "c": c, "context": context, **self.blocks}
        return step_program(self.dims.n).run(bindings)


# ----------------------------------------------------------------------
# Eager single-example operations
# ----------------------------------------------------------------------

def _row(vector: np.ndarray, size: int, what: str) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64).reshape(-1)
    if vector.size != size:
        raise DimensionMismatchError(f"{what} has {vector.size} entries, expected {size}")
    return vector.reshape(1, size)


def init_state(grid: AnnotationGrid, params: DecoderParams) -> DecoderState:
    """c_0 and h_0 predicted from the mean annotation; t = 0."""
    if grid.D != params.dims.D:
        raise DimensionMismatchError(f"Grid has D={grid.D}, decoder expects D={params.dims.D}")
    out = init_program().run({"features": grid.features, **params.to_blocks()})
    return DecoderState(h=out["h"].reshape(-1), c=out["c"].reshape(-1), t=0)


def lstm_step(
    prev_token_embedding: np.ndarray,
    state: DecoderState,
    context: np.ndarray,
    params: DecoderParams
) -> DecoderState:
    """
    Advance the LSTM one step.

    Args:
        prev_token_embedding: E y_{t-1} (m entries)
        state: State at t-1
        context: Context vector z_t (D entries)
        params: Decoder parameters

    Returns:
        State at t
    """
    dims = params.dims
    bindings = {
        "embedded": _row(prev_token_embedding, dims.m, "Embedding"),
        "h": _row(state.h, dims.n, "Hidden state"),
        "c": _row(state.c, dims.n, "Memory state"),
        "context": _row(context, dims.D, "Context"),
        **params.to_blocks(),
    }
    out = lstm_program(dims.n).run(bindings)
    return DecoderState(h=out["h"].reshape(-1), c=out["c"].reshape(-1), t=state.t + 1)


def output_distribution(
    prev_token: int,
    state: DecoderState,
    context: np.ndarray,
    params: DecoderParams
) -> np.ndarray:
    """Softmax over the vocabulary of the deep output logits."""
    dims = params.dims
    if not 0 <= int(prev_token) < dims.K:
        raise ValueError(f"Token index {prev_token} out of range for K={dims.K}")
    bindings = {
        "prev": one_hot_rows([prev_token], dims.K)[0],
        "h": _row(state.h, dims.n, "Hidden state"),
        "context": _row(context, dims.D, "Context"),
        **params.to_blocks(),
    }
    return output_program().run(bindings)["probs"].reshape(-1)


def decode_step(
    grid: AnnotationGrid,
    state: DecoderState,
    prev_token: int,
    params: DecoderParams,
    mode: str = SOFT,
    rng: Optional[np.random.Generator] = None,
    location: Optional[int] = None,
    weights: Optional[AttentionWeights] = None,
    gate: bool = True
) -> DecodeStep:
    """
    Attend from the pre-update state, build the context, update the LSTM and
    emit the word distribution.

    Args:
        grid: Annotation vectors
        state: State at t-1
        prev_token: y_{t-1}
        params: Decoder parameters
        mode: "soft" or "hard"
        rng: Hard mode samples the location from alpha with this source;
            without it the argmax location is taken
        location: Hard mode only; forces the attended location
        weights: Soft mode only; replaces the computed alpha
        gate: Soft mode only; False fixes beta to 1

    Returns:
        DecodeStep
    """
    if mode not in MODES:
        raise ValueError(f"Unknown attention mode '{mode}'")
    dims = params.dims
    if not 0 <= int(prev_token) < dims.K:
        raise ValueError(f"Token index {prev_token} out of range for K={dims.K}")
    session = DecoderSession(params, grid.features[np.newaxis], gate=gate)
    h = _row(state.h, dims.n, "Hidden state")[np.newaxis]
    c = _row(state.c, dims.n, "Memory state")[np.newaxis]
    attended = session.attend(h)
    alpha = AttentionWeights(attended["weights"].reshape(-1))

    beta: Optional[float] = None
    chosen: Optional[int] = None
    if mode == SOFT:
        if weights is not None:
            alpha = weights
            context_vector, beta = soft_context(grid, weights, state.h, params.attention, gate=gate)
            context = context_vector.reshape(1, 1, -1)
        else:
            context = attended["context"]
            beta = float(attended["beta"].reshape(-1)[0]) if gate else 1.0
    else:
        if location is not None:
            chosen = int(location)
        elif rng is not None:
            chosen = int(rng.choice(grid.L, p=alpha.alpha))
        else:
            chosen = alpha.argmax
        if not 0 <= chosen < grid.L:
            raise ValueError(f"Location {chosen} outside [0, {grid.L})")
        context = select_location(grid, chosen).context.reshape(1, 1, -1)

    out = session.step(np.array([prev_token]), h, c, context)
    new_state = DecoderState(h=out["h"].reshape(-1), c=out["c"].reshape(-1), t=state.t + 1)
    return DecodeStep(out["probs"].reshape(-1), new_state, alpha, chosen, beta)
