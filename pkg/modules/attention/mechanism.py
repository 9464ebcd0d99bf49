"""
Attention Mechanism

Graph builders for the attention MLP, the softmax over locations, the gating
scalar and the soft (expected) context, plus eager single-example operations
built on small cached programs.

Shape convention: annotations are [..., L, D], hidden states are rows
[..., 1, n]; scores and weights are columns [..., L, 1]. The leading batch
dimension is optional so the same builders serve one caption or a mini-batch.
"""

from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import entr

from modules.graphcore import Graph, Node, Program

from .types import (
    BLOCK_PREFIX,
    AnnotationGrid,
    AttentionParams,
    AttentionWeights,
    DimensionMismatchError,
    HardSample,
)

# Keeps log(alpha) finite where alpha underflows to 0; 0 * log(tiny) is still 0.
LOG_FLOOR = 1e-300


class AttentionNodes(NamedTuple):
    scores: Node  # [..., L, 1]
    weights: Node  # [..., L, 1]
    beta: Optional[Node]  # [..., 1, 1]
    expected: Node  # [..., 1, D]
    context: Node  # [..., 1, D]


def block(graph: Graph, name: str) -> Node:
    return graph.parameter(BLOCK_PREFIX + name)


def project_annotations(graph: Graph, features: Node) -> Node:
    """a_i W_a + b for every location. Independent of h, so built once per caption."""
    return graph.add(graph.matmul(features, block(graph, "W_a")), block(graph, "b"), label="attention.projected")


def score_nodes(graph: Graph, projected: Node, h: Node) -> Node:
    """e_i = tanh(a_i W_a + b + h W_h) v"""
    hidden = graph.tanh(graph.add(projected, graph.matmul(h, block(graph, "W_h"))))
    return graph.matmul(hidden, block(graph, "v"), label="attention.scores")


def weight_nodes(graph: Graph, scores: Node) -> Node:
    return graph.softmax(scores, axis=-2, label="attention.alpha")


def gate_nodes(graph: Graph, h: Node) -> Node:
    """beta = sigmoid(h beta_w + beta_b)"""
    return graph.sigmoid(
        graph.add(graph.matmul(h, block(graph, "beta_w")), block(graph, "beta_b")),
        label="attention.beta",
    )


def expected_context_nodes(graph: Graph, weights: Node, features: Node) -> Node:
    """sum_i alpha_i a_i as a [..., 1, D] row. With a one-hot column this selects a_i exactly."""
    return graph.sum(graph.multiply(weights, features), axis=-2, keepdims=True)


def entropy_nodes(graph: Graph, weights: Node) -> Node:
    """-sum_i alpha_i log alpha_i as a [..., 1, 1] node."""
    logs = graph.log(graph.add(weights, graph.constant(LOG_FLOOR)))
    return graph.scale(graph.sum(graph.multiply(weights, logs), axis=-2, keepdims=True), -1.0)


def attention_nodes(
    graph: Graph,
    features: Node,
    projected: Node,
    h: Node,
    gate: bool = True
) -> AttentionNodes:
    """
    Wire one attention step: scores from h, softmax weights and soft context.

    Args:
        graph: Graph to extend
        features: Annotation node [..., L, D]
        projected: Output of project_annotations for the same features
        h: Previous hidden state [..., 1, n]
        gate: When False beta is fixed to 1 and no gate node is built

    Returns:
        AttentionNodes; context is beta * expected (or expected without gate)
    """
    scores = score_nodes(graph, projected, h)
    weights = weight_nodes(graph, scores)
    expected = expected_context_nodes(graph, weights, features)
    if not gate:
        return AttentionNodes(scores, weights, None, expected, expected)
    beta = gate_nodes(graph, h)
    return AttentionNodes(scores, weights, beta, expected, graph.multiply(beta, expected, label="attention.context"))


# ----------------------------------------------------------------------
# Eager operations
# ----------------------------------------------------------------------

@lru_cache(maxsize=None)
def _scores_program() -> Program:
    graph = Graph("attention_scores")
    features = graph.input("features")
    h = graph.input("h")
    scores = score_nodes(graph, project_annotations(graph, features), h)
    return Program(graph, {"scores": scores})


@lru_cache(maxsize=None)
def _weights_program() -> Program:
    graph = Graph("attention_weights")
    scores = graph.input("scores")
    return Program(graph, {"weights": graph.softmax(scores, axis=-1)})


@lru_cache(maxsize=None)
def _context_program(gate: bool) -> Program:
    graph = Graph("soft_context")
    features = graph.input("features")
    weights = graph.input("weights")
    h = graph.input("h")
    expected = expected_context_nodes(graph, weights, features)
    outputs = {"expected": expected}
    if gate:
        beta = gate_nodes(graph, h)
        outputs["beta"] = beta
        outputs["context"] = graph.multiply(beta, expected)
    else:
        outputs["context"] = expected
    return Program(graph, outputs)


def _hidden_row(h_prev: np.ndarray, params: AttentionParams) -> np.ndarray:
    h = np.asarray(h_prev, dtype=np.float64).reshape(-1)
    if h.size != params.n:
        raise DimensionMismatchError(f"Hidden state has {h.size} entries, attention expects n={params.n}")
    return h.reshape(1, -1)


def _check_grid(grid: AnnotationGrid, params: AttentionParams) -> None:
    if grid.D != params.D:
        raise DimensionMismatchError(f"Annotation grid has D={grid.D}, attention expects D={params.D}")


def attention_scores(grid: AnnotationGrid, h_prev: np.ndarray, params: AttentionParams) -> np.ndarray:
    """
    Unnormalized relevance of every location given the previous hidden state.

    Args:
        grid: Annotation vectors
        h_prev: Previous hidden state (n entries)
        params: Attention weights

    Returns:
        Length-L score vector

    Raises:
        DimensionMismatchError: grid or h_prev does not match params
    """
    _check_grid(grid, params)
    bindings = {"features": grid.features, "h": _hidden_row(h_prev, params), **params.to_blocks()}
    return _scores_program().run(bindings)["scores"].reshape(-1)


def attention_weights(scores: np.ndarray) -> AttentionWeights:
    """Softmax of the scores over locations."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(scores)):
        raise ValueError("Attention scores must be finite")
    return AttentionWeights(_weights_program().run({"scores": scores})["weights"])


def soft_context(
    grid: AnnotationGrid,
    weights: AttentionWeights,
    h_prev: np.ndarray,
    params: AttentionParams,
    gate: bool = True
):
    """
    Deterministic context: beta * sum_i alpha_i a_i.

    Returns:
        (context D-vector, beta). beta is 1.0 when gate is False.
    """
    _check_grid(grid, params)
    if weights.L != grid.L:
        raise DimensionMismatchError(f"{weights.L} weights for {grid.L} locations")
    bindings = {
        "features": grid.features,
        "weights": weights.alpha.reshape(-1, 1),
        "h": _hidden_row(h_prev, params),
        **params.to_blocks(),
    }
    out = _context_program(gate).run(bindings)
    beta = float(out["beta"].reshape(-1)[0]) if gate else 1.0
    return out["context"].reshape(-1), beta


def hard_sample(grid: AnnotationGrid, weights: AttentionWeights, rng: np.random.Generator) -> HardSample:
    """Draw a location from multinoulli(alpha); the context is that annotation row."""
    if weights.L != grid.L:
        raise DimensionMismatchError(f"{weights.L} weights for {grid.L} locations")
    location = int(rng.choice(grid.L, p=weights.alpha))
    return select_location(grid, location)


def select_location(grid: AnnotationGrid, location: int) -> HardSample:
    one_hot = np.zeros(grid.L)
    one_hot[location] = 1.0
    return HardSample(location, one_hot, grid.features[location].copy())


def multinoulli_entropy(weights: AttentionWeights) -> float:
    """H = -sum alpha_i ln alpha_i, with 0 ln 0 = 0."""
    return float(entr(weights.alpha).sum())
