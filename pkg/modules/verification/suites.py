"""
Oracle Suites

Deterministic identities ("fast") and Monte Carlo properties ("full") that
gate a build:

fast
    - graph primitive gradients and the full soft loss against finite differences
    - NWGM of per-location predictions equals softmax of expected logits
    - enumerated hard objective is a lower bound on log p(y|a)
    - exact hard-objective gradient against finite differences
    - attention penalty vanishes exactly for doubly stochastic weights
    - BLEU hand-computed oracles
    - expected hard context equals the ungated soft context
    - checkpoint and annotation files round-trip; corrupted magic is typed

full (adds)
    - the single-sample hard estimator is unbiased for the enumerated gradient
    - constant baselines leave the mean unchanged; the running baseline does not add variance
    - hard_sample frequencies follow alpha

Monte Carlo checks compare group means: each group is one estimate averaged
over many sampled rows of the same image, so the group means are i.i.d. with
the estimator's mean.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from modules.attention import AnnotationGrid, AttentionWeights, hard_sample, select_location, soft_context
from modules.data import (
    AnnotationDataset,
    AnnotationRecord,
    BadMagicError,
    decode_annotations,
    encode_annotations,
)
from modules.decoder import (
    SOFT,
    CaptionSequence,
    CheckpointMagicError,
    DecoderParams,
    DecoderState,
    ModelDims,
    caption_bindings,
    caption_graph,
    decode_checkpoint,
    encode_checkpoint,
    init_params,
    location_marginals,
    zero_params,
)
from modules.evalviz import bleu
from modules.graphcore import GradientMap, Graph, compare_gradients, evaluate, finite_difference_gradient, grad_check
from modules.training import (
    BaselineState,
    HardLossConfig,
    TrainingExample,
    exact_hard_objective,
    hard_gradient_estimate,
    make_batch,
)
from utils.config_loader import get_config

logger = logging.getLogger(__name__)

FAST = "fast"
FULL = "full"
LEVELS = (FAST, FULL)
FAULTS = ("gradient",)

GradientHook = Optional[Callable[[GradientMap], GradientMap]]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


class CheckContext:
    """Seeded random source plus the optional fault injected into analytic gradients."""

    def __init__(self, seed: int, inject_fault: Optional[str] = None):
        if inject_fault is not None and inject_fault not in FAULTS:
            raise ValueError(f"Unknown fault '{inject_fault}', expected one of {FAULTS}")
        self.rng = np.random.default_rng(seed)
        self.inject_fault = inject_fault
        self.step = get_config("gradcheck.step", 1e-5)
        self.tolerance = get_config("gradcheck.tolerance", 1e-4)
        self.abs_floor = get_config("gradcheck.abs_floor", 1e-8)

    @property
    def gradient_hook(self) -> GradientHook:
        if self.inject_fault != "gradient":
            return None
        return lambda grads: {name: grad + 0.1 for name, grad in grads.items()}


# ----------------------------------------------------------------------
# Instances
# ----------------------------------------------------------------------

def random_instance(rng: np.random.Generator, dims: ModelDims, L: int, C: int, scale: float = 0.5):
    """Random grid, caption of length C (no EOS before the end) and parameters."""
    grid = AnnotationGrid(rng.normal(0.0, 1.0, (L, dims.D)))
    words = rng.integers(2, dims.K, size=C - 1)
    caption = CaptionSequence.from_words(words.tolist())
    return grid, caption, init_params(dims, rng, scale)


def _tiny_dims() -> ModelDims:
    return ModelDims.of(K=6, m=4, n=4, D=4, A=4)


# ----------------------------------------------------------------------
# Fast checks
# ----------------------------------------------------------------------

def check_graph_primitives(ctx: CheckContext) -> CheckResult:
    graph = Graph("primitives")
    x, W, b, y = (graph.input(name) for name in ("x", "W", "b", "y"))
    a = graph.add(graph.matmul(x, W), b)
    s = graph.softmax(a, axis=-1)
    t = graph.multiply(graph.tanh(a), graph.sigmoid(y))
    u = graph.log(graph.add(graph.exp(graph.scale(t, 0.5)), graph.constant(1.0)))
    part = graph.slice(graph.concat([s, u], axis=-1), 2, 6)
    m = graph.mean(graph.square(part), axis=0, keepdims=True)
    out = graph.sum(graph.sub(m, graph.scale(graph.sum(s, axis=-1, keepdims=True), 0.1)), label="out")
    bindings = {
        "x": ctx.rng.normal(size=(2, 3)),
        "W": ctx.rng.normal(size=(3, 4)),
        "b": ctx.rng.normal(size=(4,)),
        "y": ctx.rng.normal(size=(2, 4)),
    }
    report = grad_check(graph, bindings, out, list(bindings), ctx.step, ctx.tolerance, ctx.abs_floor, ctx.gradient_hook)
    return CheckResult("graph_primitive_gradients", report.passed, f"max rel error {report.max_relative_error:.2e}")


def check_soft_loss_gradients(ctx: CheckContext) -> CheckResult:
    """Penalized NLL with the beta gate on K=12, L=4, C=3, n=m=8, D=6."""
    dims = ModelDims.of(K=12, m=8, n=8, D=6)
    B, L, C = 2, 4, 3
    params = init_params(dims, ctx.rng, 0.5)
    features = ctx.rng.normal(size=(B, L, dims.D))
    captions = np.column_stack([ctx.rng.integers(2, dims.K, size=(B, C - 1)), np.ones(B, dtype=np.int64)])
    previous = np.column_stack([np.zeros(B, dtype=np.int64), captions[:, :-1]])

    cg = caption_graph(dims, C, SOFT, True)
    bindings = caption_bindings(features, captions, previous, dims)
    bindings["lambda_penalty"] = np.array([1.0])
    bindings.update(params.to_blocks())
    report = grad_check(
        cg.graph, bindings, cg.loss, list(params.to_blocks()), ctx.step, ctx.tolerance, ctx.abs_floor, ctx.gradient_hook
    )
    detail = f"max rel error {report.max_relative_error:.2e}"
    if report.failures:
        detail += f"; failing blocks: {', '.join(report.failures)}"
    return CheckResult("soft_loss_gradients", report.passed, detail)


def check_nwgm_identity(ctx: CheckContext, instances: int = 100) -> CheckResult:
    dims = ModelDims.of(K=7, m=5, n=5, D=4)
    worst = 0.0
    for _ in range(instances):
        L = int(ctx.rng.integers(2, 6))
        params = init_params(dims, ctx.rng, 0.5)
        grid = AnnotationGrid(ctx.rng.normal(size=(L, dims.D)))
        state = DecoderState(h=ctx.rng.normal(size=dims.n), c=ctx.rng.normal(size=dims.n), t=0)
        marginals = location_marginals(grid, state, int(ctx.rng.integers(dims.K)), params)
        worst = max(worst, float(np.abs(marginals.nwgm - marginals.expected_logit_distribution).max()))
    return CheckResult("nwgm_identity", worst <= 1e-10, f"max abs difference {worst:.2e} over {instances} instances")


def check_lower_bound(ctx: CheckContext, instances: int = 50) -> CheckResult:
    dims = _tiny_dims()
    worst_margin = np.inf
    for _ in range(instances):
        grid, caption, params = random_instance(ctx.rng, dims, L=3, C=2)
        objective = exact_hard_objective(grid, caption, params)
        worst_margin = min(worst_margin, objective.log_marginal - objective.value)
    return CheckResult("lower_bound", worst_margin >= -1e-12, f"min log p(y|a) - L_s = {worst_margin:.3e}")


def check_exact_gradient(ctx: CheckContext) -> CheckResult:
    dims = _tiny_dims()
    grid, caption, params = random_instance(ctx.rng, dims, L=3, C=2)
    analytic = exact_hard_objective(grid, caption, params).grads
    if ctx.gradient_hook is not None:
        analytic = ctx.gradient_hook(analytic)

    def value(blocks: Dict[str, np.ndarray]) -> float:
        return exact_hard_objective(grid, caption, DecoderParams.from_blocks(blocks)).value

    blocks = params.to_blocks()
    numeric = finite_difference_gradient(value, blocks, list(blocks), ctx.step)
    report = compare_gradients(analytic, numeric, ctx.tolerance, ctx.abs_floor)
    return CheckResult("exact_hard_gradient", report.passed, f"max rel error {report.max_relative_error:.2e}")


def check_attention_penalty(ctx: CheckContext) -> CheckResult:
    """Zero parameters give uniform alpha, so C = L steps make every column sum exactly 1."""
    dims = ModelDims.of(K=6, m=4, n=4, D=3)
    L = 4
    params = zero_params(dims)
    features = ctx.rng.normal(size=(1, L, dims.D))

    def penalty(C: int) -> float:
        captions = np.array([[2] * (C - 1) + [1]])
        previous = np.array([[0] + [2] * (C - 1)])
        cg = caption_graph(dims, C, SOFT, True)
        bindings = caption_bindings(features, captions, previous, dims)
        bindings["lambda_penalty"] = np.array([1.0])
        bindings.update(params.to_blocks())
        return float(evaluate(cg.graph, bindings)[cg.penalty].reshape(-1)[0])

    balanced, unbalanced = penalty(L), penalty(L - 1)
    passed = abs(balanced) <= 1e-9 and unbalanced > 1e-9 and abs(unbalanced - L * (1.0 / L) ** 2) <= 1e-9
    return CheckResult("attention_penalty", passed, f"penalty C=L: {balanced:.2e}, C=L-1: {unbalanced:.4f}")


def check_bleu_oracles(ctx: CheckContext) -> CheckResult:
    failures = []
    clipped = bleu([["a", "a", "a", "a"]], [[["a", "cat"]]], max_n=1).bleu1
    if clipped != 0.25:
        failures.append(f"clipping case gave {clipped}")
    sentence = "the cat sat on the mat".split()
    identical = bleu([sentence], [[sentence]])
    if any(score != 1.0 for score in identical.scores):
        failures.append(f"identical pair gave {identical.scores}")
    report = bleu([sentence], [["the cat is on the mat".split()]], max_n=2)
    if report.precisions != (5 / 6, 3 / 5) or abs(report.bleu2 - np.sqrt(0.5)) > 1e-12:
        failures.append(f"modified precisions {report.precisions}")
    return CheckResult("bleu_oracles", not failures, "; ".join(failures) or "3 oracles")


def check_expected_context(ctx: CheckContext) -> CheckResult:
    dims = ModelDims.of(K=6, m=4, n=4, D=5)
    params = init_params(dims, ctx.rng, 0.5).attention
    grid = AnnotationGrid(ctx.rng.normal(size=(6, dims.D)))
    weights = AttentionWeights(ctx.rng.dirichlet(np.ones(grid.L)))
    expected = sum(weights.alpha[i] * select_location(grid, i).context for i in range(grid.L))
    context, _ = soft_context(grid, weights, ctx.rng.normal(size=dims.n), params, gate=False)
    gap = float(np.abs(expected - context).max())
    return CheckResult("expected_hard_context", gap <= 1e-12, f"max abs difference {gap:.2e}")


def check_formats(ctx: CheckContext) -> CheckResult:
    failures = []
    params = init_params(_tiny_dims(), ctx.rng)
    raw = encode_checkpoint(params)
    decoded = decode_checkpoint(raw)
    if any(decoded[name].tobytes() != value.tobytes() for name, value in params.to_blocks().items()):
        failures.append("checkpoint values changed")
    try:
        decode_checkpoint(b"XXXXXXXX" + raw[8:])
        failures.append("corrupted checkpoint magic accepted")
    except CheckpointMagicError:
        pass

    grid = AnnotationGrid(ctx.rng.normal(size=(4, 3)))
    dataset = AnnotationDataset(L=4, D=3, K=6, records=[AnnotationRecord(CaptionSequence((3, 4, 1)), grid, {0: 2, 1: 2})])
    data = encode_annotations(dataset)
    if encode_annotations(decode_annotations(data)) != data:
        failures.append("annotation file changed on round trip")
    try:
        decode_annotations(b"ATTNDATX" + data[8:])
        failures.append("corrupted annotation magic accepted")
    except BadMagicError:
        pass
    return CheckResult("file_formats", not failures, "; ".join(failures) or "checkpoint and annotation round trips")


# ----------------------------------------------------------------------
# Monte Carlo checks
# ----------------------------------------------------------------------

def _group_means(
    example: TrainingExample,
    params: DecoderParams,
    config: HardLossConfig,
    baseline: BaselineState,
    rng: np.random.Generator,
    groups: int,
    update: bool
) -> Dict[str, np.ndarray]:
    batch = make_batch([example])
    samples: Dict[str, List[np.ndarray]] = {}
    for _ in range(groups):
        estimate, baseline = hard_gradient_estimate(batch, params, config, baseline, rng, update=update)
        for name, grad in estimate.grads.items():
            samples.setdefault(name, []).append(grad)
    return {name: np.stack(values) for name, values in samples.items()}


def _unbiased_fraction(groups: Dict[str, np.ndarray], exact: GradientMap) -> float:
    """Share of coordinates whose group-mean average lies within 3 standard errors of the exact value."""
    inside = total = 0
    for name, values in groups.items():
        mean = values.mean(axis=0)
        stderr = values.std(axis=0, ddof=1) / np.sqrt(values.shape[0])
        gap = np.abs(mean - exact[name])
        ok = (gap <= 3.0 * stderr) | (gap <= 1e-10)
        inside += int(ok.sum())
        total += ok.size
    return inside / total


def _estimator_setup(ctx: CheckContext):
    dims = _tiny_dims()
    grid, caption, params = random_instance(ctx.rng, dims, L=3, C=2)
    config = HardLossConfig(
        lambda_r=1.0, lambda_e=0.0, sample_count=100,
        expectation_substitution_prob=0.0, baseline_decay=0.9, dropout_rate=0.0,
    )
    exact = exact_hard_objective(grid, caption, params).grads
    return TrainingExample(grid, caption), params, config, exact


def check_unbiased_estimator(ctx: CheckContext, groups: int = 200) -> CheckResult:
    """20,000 single-sample estimates as 200 groups of 100 rows."""
    example, params, config, exact = _estimator_setup(ctx)
    means = _group_means(example, params, config, BaselineState(), ctx.rng, groups, update=False)
    fraction = _unbiased_fraction(means, exact)
    return CheckResult("estimator_unbiased", fraction >= 0.99, f"{fraction:.1%} of coordinates within 3 SE")


def check_baseline(ctx: CheckContext, groups: int = 50, warmup: int = 200) -> CheckResult:
    """Constant baseline keeps the mean; the running baseline does not inflate variance."""
    example, params, config, exact = _estimator_setup(ctx)
    constant = _group_means(example, params, config, BaselineState(b=-2.0), ctx.rng, groups * 4, update=False)
    neutral = _unbiased_fraction(constant, exact)

    zero = _group_means(example, params, config, BaselineState(), ctx.rng, groups, update=False)
    baseline = BaselineState()
    batch = make_batch([example])
    for _ in range(warmup):
        _, baseline = hard_gradient_estimate(batch, params, config, baseline, ctx.rng)
    running = _group_means(example, params, config, baseline, ctx.rng, groups, update=True)

    worse = total = 0
    for name in zero:
        var_zero = zero[name].var(axis=0, ddof=1)
        var_run = running[name].var(axis=0, ddof=1)
        se = np.sqrt(2.0 / (groups - 1)) * np.sqrt(var_zero ** 2 + var_run ** 2)
        worse += int(np.sum(var_run - var_zero > 3.0 * se + 1e-300))
        total += var_zero.size
    worse_share = worse / total
    passed = neutral >= 0.99 and worse_share <= 0.10
    return CheckResult(
        "baseline_neutral_and_variance", passed,
        f"constant baseline {neutral:.1%} within 3 SE; running baseline worse on {worse_share:.1%} of coordinates",
    )


def check_hard_sample_frequency(ctx: CheckContext, draws: int = 10_000) -> CheckResult:
    grid = AnnotationGrid(np.eye(4))
    alpha = np.array([0.5, 0.3, 0.15, 0.05])
    weights = AttentionWeights(alpha)
    counts = np.bincount([hard_sample(grid, weights, ctx.rng).location for _ in range(draws)], minlength=4)
    freq = counts / draws
    z = np.abs(freq - alpha) / np.sqrt(alpha * (1 - alpha) / draws)
    return CheckResult("hard_sample_frequency", bool(np.all(z <= 4.0)), f"max z {z.max():.2f}")


FAST_CHECKS = (
    check_graph_primitives,
    check_soft_loss_gradients,
    check_nwgm_identity,
    check_lower_bound,
    check_exact_gradient,
    check_attention_penalty,
    check_bleu_oracles,
    check_expected_context,
    check_formats,
)
FULL_CHECKS = FAST_CHECKS + (
    check_unbiased_estimator,
    check_baseline,
    check_hard_sample_frequency,
)


def run_suite(level: str = FAST, seed: int = 0, inject_fault: Optional[str] = None) -> List[CheckResult]:
    """
    Run the fast or full oracle suite.

    Args:
        level: "fast" or "full"
        seed: Seed for every random instance
        inject_fault: "gradient" corrupts analytic gradients to prove the checks bite

    Returns:
        One CheckResult per check, in run order
    """
    if level not in LEVELS:
        raise ValueError(f"Unknown level '{level}', expected one of {LEVELS}")
    ctx = CheckContext(seed, inject_fault)
    results = []
    for check in FAST_CHECKS if level == FAST else FULL_CHECKS:
        started = time.perf_counter()
        try:
            result = check(ctx)
        except Exception as e:
            logger.exception("Check %s raised", check.__name__)
            result = CheckResult(check.__name__.removeprefix("check_"), False, f"{type(e).__name__}: {e}")
        result.seconds = time.perf_counter() - started
        logger.info("%s %s (%.2fs) %s", "PASS" if result.passed else "FAIL", result.name, result.seconds, result.detail)
        results.append(result)
    return results


def format_table(results: List[CheckResult]) -> str:
    width = max((len(r.name) for r in results), default=10)
    lines = [f"{'check':<{width}}  result  seconds  detail", "-" * (width + 32)]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.seconds:7.2f}  {r.detail}")
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} checks passed")
    return "\n".join(lines)
