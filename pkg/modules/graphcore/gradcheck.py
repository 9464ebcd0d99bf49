"""
Finite-Difference Gradient Verification

Compares reverse-mode gradients against central differences. The relative
error of one coordinate is |a - n| / max(|a|, |n|, 1e-8) and is always
reported as computed. A coordinate fails only when its relative error
exceeds the tolerance and its absolute disagreement exceeds `abs_floor`,
the round-off level of central differences.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Union

import numpy as np

from .graph import GradientMap, Graph, Node, as_tensor, backward, evaluate

RELATIVE_DENOMINATOR_FLOOR = 1e-8


@dataclass
class BlockCheck:
    """Finite-difference agreement for one parameter block."""
    name: str
    max_relative_error: float
    max_abs_error: float
    worst_index: tuple
    coordinates: int
    passed: bool


@dataclass
class GradCheckReport:
    """Per-parameter maximum relative error and the flagged blocks."""
    tolerance: float
    blocks: Dict[str, BlockCheck] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(block.passed for block in self.blocks.values())

    @property
    def failures(self) -> List[str]:
        return [name for name, block in self.blocks.items() if not block.passed]

    @property
    def max_relative_error(self) -> float:
        return max((block.max_relative_error for block in self.blocks.values()), default=0.0)

    def summary(self) -> str:
        lines = [f"grad check (tolerance {self.tolerance:g})"]
        for block in self.blocks.values():
            status = "ok" if block.passed else "FAIL"
            lines.append(
                f"  {block.name:<24} rel={block.max_relative_error:.3e} "
                f"abs={block.max_abs_error:.3e} n={block.coordinates} {status}"
            )
        return "\n".join(lines)


def finite_difference_gradient(
    fn: Callable[[Dict[str, np.ndarray]], float],
    point: Mapping[str, Any],
    names: Iterable[str],
    step: float = 1e-5
) -> GradientMap:
    """
    Central-difference gradient of a scalar function of named arrays.

    Args:
        fn: Maps a full set of named arrays to a float
        point: Named arrays at which to differentiate
        names: Which entries of point to perturb
        step: Perturbation size (must be > 0)

    Returns:
        GradientMap for the requested names
    """
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    current = {name: as_tensor(value).copy() for name, value in point.items()}
    grads: GradientMap = {}
    for name in names:
        array = current[name]
        grad = np.zeros_like(array)
        flat = array.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            f_plus = float(fn(current))
            flat[i] = original - step
            f_minus = float(fn(current))
            flat[i] = original
            grad.reshape(-1)[i] = (f_plus - f_minus) / (2.0 * step)
        grads[name] = grad
    return grads


def compare_gradients(
    analytic: Mapping[str, np.ndarray],
    numeric: Mapping[str, np.ndarray],
    tolerance: float = 1e-4,
    abs_floor: float = 1e-8
) -> GradCheckReport:
    """Build a report flagging every block with a coordinate above both tolerance and abs_floor."""
    report = GradCheckReport(tolerance=tolerance)
    for name, n in numeric.items():
        a = np.asarray(analytic[name], dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
        if a.shape != n.shape:
            raise ValueError(f"Gradient '{name}' has shape {a.shape}, numeric {n.shape}")
        abs_err = np.abs(a - n)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), RELATIVE_DENOMINATOR_FLOOR)
        rel_err = abs_err / denom
        failing = (rel_err > tolerance) & (abs_err > abs_floor)
        worst = np.unravel_index(int(np.argmax(rel_err)), rel_err.shape) if rel_err.size else ()
        max_rel = float(rel_err.max()) if rel_err.size else 0.0
        report.blocks[name] = BlockCheck(
            name=name,
            max_relative_error=max_rel,
            max_abs_error=float(abs_err.max()) if abs_err.size else 0.0,
            worst_index=tuple(int(i) for i in worst),
            coordinates=int(a.size),
            passed=not bool(failing.any()),
        )
    return report


def grad_check(
    graph: Graph,
    bindings: Mapping[str, Any],
    output: Union[Node, str],
    wrt: Iterable[Union[Node, str]],
    step: float = 1e-5,
    tolerance: float = 1e-4,
    abs_floor: float = 1e-8,
    gradient_hook: Optional[Callable[[GradientMap], GradientMap]] = None
) -> GradCheckReport:
    """
    Verify backward() against central finite differences on graph inputs.

    Args:
        graph: Graph whose scalar output is checked
        bindings: Input values at which to check
        output: Scalar (shape [1]) node
        wrt: Input nodes or names to check
        step: Finite-difference step (> 0)
        tolerance: Maximum allowed relative error per coordinate
        abs_floor: Absolute disagreement below which a coordinate agrees
        gradient_hook: Optional transform applied to the analytic gradients
            before comparison (fault injection for verification runs)

    Returns:
        GradCheckReport with per-block maximum relative error
    """
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    targets = [graph.resolve(ref) for ref in wrt]
    names = [node.key for node in targets]
    for node in targets:
        if node.op != "input":
            raise ValueError(f"grad_check perturbs inputs only; {node.key} is a '{node.op}' node")

    analytic = backward(graph, evaluate(graph, bindings), output, targets)
    if gradient_hook is not None:
        analytic = gradient_hook(analytic)

    out_node = graph.resolve(output)

    def scalar(point: Dict[str, np.ndarray]) -> float:
        return float(evaluate(graph, point)[out_node][0])

    numeric = finite_difference_gradient(scalar, bindings, names, step)
    return compare_gradients(analytic, numeric, tolerance, abs_floor)
