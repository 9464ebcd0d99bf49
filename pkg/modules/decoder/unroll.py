"""
Unrolled Caption Graph

One static graph per (caption length C, attention mode, gate) scoring a
mini-batch of B same-length captions under teacher forcing. Inputs:

    features            [B, L, D]
    prev_t, target_t    [B, 1, K]   one-hot previous and observed word, t = 0..C-1
    mask_t              [B, 1, n]   dropout mask on h_t (ones when dropout is off)
    select_t            [B, L, 1]   hard mode: one-hot sampled location (zeros when substituted)
    substitute          [B, 1, 1]   hard mode: 1 where the row uses the expected context
    lambda_penalty      [1]         soft mode: weight of the attention penalty

Every per-row output is a [B, 1, 1] node so callers can seed reverse passes
with per-row coefficients.
"""

from functools import lru_cache
from typing import Any, Dict, List, Mapping, NamedTuple, Optional

import numpy as np

from modules.attention import attention_nodes, entropy_nodes, expected_context_nodes, project_annotations
from modules.graphcore import Evaluation, Graph, GradientMap, Node, vector_jacobian

from .cell import HARD, MODES, SOFT, deep_output_nodes, embed_nodes, init_state_nodes, lstm_nodes
from .params import DecoderParams, ModelDims


class CaptionGraph(NamedTuple):
    graph: Graph
    mode: str
    C: int
    loglik: Node  # [B, 1, 1] sum_t log p(y_t)
    step_logp: List[Node]  # C x [B, 1, 1]
    alphas: List[Node]  # C x [B, L, 1]
    betas: List[Node]  # C x [B, 1, 1], soft mode with gate
    penalty: Node  # [B, 1, 1] sum_i (1 - sum_t alpha_ti)^2
    loss: Optional[Node]  # [1] soft mode: mean_b(-loglik + lambda * penalty)
    location_logp: Optional[Node]  # [B, 1, 1] hard mode: log p(s | a)
    entropy: Optional[Node]  # [B, 1, 1] hard mode: sum_t H[alpha_t]


@lru_cache(maxsize=None)
def caption_graph(dims: ModelDims, C: int, mode: str = SOFT, gate: bool = True) -> CaptionGraph:
    """
    Build (once per key) the teacher-forced graph for captions of length C.

    Args:
        dims: Model dimensions
        C: Caption length including EOS
        mode: "soft" or "hard"
        gate: Soft mode only; False fixes beta to 1

    Returns:
        CaptionGraph with handles to the nodes training reads and seeds
    """
    if mode not in MODES:
        raise ValueError(f"Unknown attention mode '{mode}'")
    if C < 1:
        raise ValueError(f"Caption length must be >= 1, got {C}")

    graph = Graph(f"caption_{mode}_C{C}")
    features = graph.input("features", (None, dims.D))
    projected = project_annotations(graph, features)
    h, c = init_state_nodes(graph, features)
    substitute = graph.input("substitute", (1, 1)) if mode == HARD else None
    one = graph.constant(1.0)

    step_logp: List[Node] = []
    alphas: List[Node] = []
    betas: List[Node] = []
    location_terms: List[Node] = []
    entropies: List[Node] = []
    for t in range(C):
        prev = graph.input(f"prev_{t}", (1, dims.K))
        target = graph.input(f"target_{t}", (1, dims.K))
        mask = graph.input(f"mask_{t}", (1, dims.n))
        attended = attention_nodes(graph, features, projected, h, gate=gate and mode == SOFT)
        alphas.append(attended.weights)
        if mode == SOFT:
            context = attended.context
            if attended.beta is not None:
                betas.append(attended.beta)
        else:
            select = graph.input(f"select_{t}", (None, 1))
            mixed = graph.add(graph.multiply(substitute, attended.weights), select)
            context = expected_context_nodes(graph, mixed, features)
            picked = graph.sum(graph.multiply(attended.weights, select), axis=-2, keepdims=True)
            location_terms.append(graph.log(graph.add(picked, substitute)))
            entropies.append(entropy_nodes(graph, attended.weights))

        embedded = embed_nodes(graph, prev)
        h, c = lstm_nodes(graph, dims.n, embedded, h, c, context)
        _, probs = deep_output_nodes(graph, embedded, h, context, dropout_mask=mask)
        step_logp.append(graph.log(graph.sum(graph.multiply(probs, target), axis=-1, keepdims=True), label=f"logp_{t}"))

    loglik = _total(graph, step_logp, "loglik")
    coverage = _total(graph, alphas, "coverage")
    penalty = graph.sum(graph.square(graph.sub(one, coverage)), axis=-2, keepdims=True, label="penalty")

    loss = location_logp = entropy = None
    if mode == SOFT:
        lam = graph.input("lambda_penalty", (1,))
        per_row = graph.add(graph.scale(loglik, -1.0), graph.multiply(lam, penalty))
        loss = graph.mean(per_row, label="loss")
    else:
        location_logp = _total(graph, location_terms, "location_logp")
        entropy = _total(graph, entropies, "entropy")
    return CaptionGraph(graph, mode, C, loglik, step_logp, alphas, betas, penalty, loss, location_logp, entropy)


def parameter_gradients(
    cg: CaptionGraph,
    evaluation: Evaluation,
    seeds: Mapping[Node, Any],
    params: DecoderParams
) -> GradientMap:
    """
    Seeded reverse pass over every parameter block, in to_blocks() order.

    Blocks the graph never reads (the beta gate in hard or ungated graphs)
    get zero gradients.
    """
    blocks = params.to_blocks()
    grads = vector_jacobian(evaluation, seeds, [name for name in blocks if name in cg.graph.inputs])
    return {name: grads[name] if name in grads else np.zeros_like(value) for name, value in blocks.items()}


def _total(graph: Graph, terms: List[Node], label: str) -> Node:
    total = terms[0]
    for term in terms[1:]:
        total = graph.add(total, term)
    return graph.scale(total, 1.0, label=label)


def caption_bindings(
    features: np.ndarray,
    captions: np.ndarray,
    prev: np.ndarray,
    dims: ModelDims,
    masks: Optional[np.ndarray] = None
) -> Dict[str, np.ndarray]:
    """
    Teacher-forcing bindings for a batch.

    Args:
        features: [B, L, D]
        captions: [B, C] observed tokens
        prev: [B, C] previous tokens (BOS first)
        dims: Model dimensions
        masks: Optional [C, B, 1, n] dropout masks; ones when omitted

    Returns:
        Name -> array for features, prev_t, target_t and mask_t
    """
    B, C = captions.shape
    eye = np.eye(dims.K)
    bindings: Dict[str, np.ndarray] = {"features": features}
    for t in range(C):
        bindings[f"prev_{t}"] = eye[prev[:, t]][:, np.newaxis, :]
        bindings[f"target_{t}"] = eye[captions[:, t]][:, np.newaxis, :]
        bindings[f"mask_{t}"] = masks[t] if masks is not None else np.ones((B, 1, dims.n))
    return bindings
