"""
Graph engine tests - forward values, reverse-mode gradients, error reporting.
"""
import numpy as np
import pytest

from modules.graphcore import (
    Graph,
    NonScalarOutputError,
    ShapeMismatchError,
    UnboundInputError,
    UnknownNodeError,
    backward,
    compare_gradients,
    evaluate,
    grad_check,
    vector_jacobian,
)


def _unary_graph(op):
    graph = Graph("unary")
    x = graph.input("x")
    y = getattr(graph, op)(x)
    out = graph.sum(graph.multiply(y, graph.input("w")))
    return graph, out


@pytest.mark.parametrize("op", ["sigmoid", "tanh", "exp", "square", "softmax"])
def test_unary_gradients_match_finite_differences(op, rng):
    """Test every elementwise rule against central differences."""
    graph, out = _unary_graph(op)
    bindings = {"x": rng.normal(size=(3, 4)), "w": rng.normal(size=(3, 4))}
    report = grad_check(graph, bindings, out, ["x"])
    assert report.passed, report.summary()


def test_log_gradient(rng):
    """Test log on strictly positive inputs."""
    graph, out = _unary_graph("log")
    bindings = {"x": rng.uniform(0.5, 2.0, size=(5,)), "w": rng.normal(size=(5,))}
    assert grad_check(graph, bindings, out, ["x"]).passed


def test_matmul_broadcast_and_reductions(rng):
    """Test matmul, broadcast add, concat, slice and mean in one graph."""
    graph = Graph("mixed")
    a = graph.input("a", (None, 3))
    b = graph.input("b", (3, 2))
    bias = graph.input("bias", (2,))
    h = graph.tanh(graph.add(graph.matmul(a, b), bias))
    joined = graph.concat([h, graph.slice(a, 0, 2)], axis=-1)
    out = graph.mean(graph.square(joined))
    bindings = {"a": rng.normal(size=(4, 3)), "b": rng.normal(size=(3, 2)), "bias": rng.normal(size=2)}
    report = grad_check(graph, bindings, out, ["a", "b", "bias"])
    assert report.passed, report.summary()


def test_reduction_over_axis(rng):
    """Test sum with an explicit axis and keepdims."""
    graph = Graph()
    x = graph.input("x")
    s = graph.sum(x, axis=-1, keepdims=True)
    out = graph.sum(graph.multiply(graph.softmax(s, axis=0), graph.input("w")))
    bindings = {"x": rng.normal(size=(4, 3)), "w": rng.normal(size=(4, 1))}
    assert grad_check(graph, bindings, out, ["x"]).passed


def test_forward_values():
    """Test forward evaluation of a small expression."""
    graph = Graph()
    x = graph.input("x")
    y = graph.sub(graph.scale(x, 3.0), graph.constant([1.0, 1.0]))
    values = evaluate(graph, {"x": [1.0, 2.0]})
    np.testing.assert_allclose(values[y], [2.0, 5.0])


def test_evaluate_is_pure(rng):
    """Test that two evaluations with the same bindings agree bitwise and leave the bindings alone."""
    graph = Graph()
    x = graph.input("x")
    w = graph.input("w")
    hidden = graph.tanh(graph.matmul(x, w))
    out = graph.sum(graph.softmax(hidden))
    bindings = {"x": rng.normal(size=(2, 3)), "w": rng.normal(size=(3, 4))}
    before = {name: value.copy() for name, value in bindings.items()}
    first, second = evaluate(graph, bindings), evaluate(graph, bindings)
    for node in (hidden, out):
        np.testing.assert_array_equal(first[node], second[node])
    for name, value in bindings.items():
        np.testing.assert_array_equal(value, before[name])


def test_rank_zero_results_promoted():
    """Test that full reductions produce shape [1]."""
    graph = Graph()
    total = graph.sum(graph.input("x"))
    assert evaluate(graph, {"x": np.ones((2, 2))})[total].shape == (1,)


def test_shared_subexpression_accumulates():
    """Test gradient accumulation when a node feeds two consumers."""
    graph = Graph()
    x = graph.input("x")
    out = graph.sum(graph.multiply(x, x))
    grads = backward(graph, evaluate(graph, {"x": [3.0]}), out, ["x"])
    np.testing.assert_allclose(grads["x"], [6.0])


def test_unreached_input_gets_zero_gradient():
    """Test that inputs not on the path to the output get zeros."""
    graph = Graph()
    x = graph.input("x")
    graph.input("unused")
    out = graph.sum(x)
    grads = backward(graph, evaluate(graph, {"x": [1.0, 2.0], "unused": [[1.0, 1.0]]}), out, ["unused"])
    np.testing.assert_array_equal(grads["unused"], np.zeros((1, 2)))


def test_vector_jacobian_with_seed(rng):
    """Test a VJP against the explicit Jacobian of a linear map."""
    graph = Graph()
    x = graph.input("x")
    weights = rng.normal(size=(3, 2))
    y = graph.matmul(x, graph.constant(weights))
    seed = np.array([[1.0, -2.0]])
    grads = vector_jacobian(evaluate(graph, {"x": [[0.1, 0.2, 0.3]]}), {y: seed}, ["x"])
    np.testing.assert_allclose(grads["x"], seed @ weights.T)


def test_unbound_input_raises():
    """Test that a missing binding names the input."""
    graph = Graph()
    graph.sum(graph.input("x"))
    with pytest.raises(UnboundInputError, match="x"):
        evaluate(graph, {})


def test_shape_mismatch_names_node():
    """Test that a bad matmul reports its node id and label."""
    graph = Graph()
    graph.matmul(graph.input("a"), graph.input("b"), label="proj")
    with pytest.raises(ShapeMismatchError) as info:
        evaluate(graph, {"a": np.ones((2, 3)), "b": np.ones((2, 3))})
    assert info.value.label == "proj"
    assert info.value.op == "matmul"


def test_declared_shape_is_enforced():
    """Test that a bound value must match the declared trailing shape."""
    graph = Graph()
    graph.input("x", (None, 3))
    with pytest.raises(ShapeMismatchError):
        evaluate(graph, {"x": np.ones((2, 4))})


def test_non_scalar_output_rejected():
    """Test backward() on a vector output."""
    graph = Graph()
    x = graph.input("x")
    with pytest.raises(NonScalarOutputError):
        backward(graph, evaluate(graph, {"x": [1.0, 2.0]}), x, ["x"])


def test_foreign_node_rejected():
    """Test that nodes from another graph are refused."""
    first, second = Graph("first"), Graph("second")
    x = first.input("x")
    with pytest.raises(UnknownNodeError):
        second.tanh(x)


def test_gradient_hook_is_detected(rng):
    """Test that corrupted analytic gradients fail the check."""
    graph, out = _unary_graph("tanh")
    bindings = {"x": rng.normal(size=(2, 2)), "w": rng.normal(size=(2, 2))}
    report = grad_check(
        graph, bindings, out, ["x"],
        gradient_hook=lambda grads: {k: v + 0.1 for k, v in grads.items()},
    )
    assert not report.passed
    assert report.failures == ["x"]


def test_compare_gradients_reports_true_relative_error():
    """Test that small healthy disagreements are reported, not rounded to zero."""
    analytic = {"w": np.array([1.0, 2.0])}
    numeric = {"w": np.array([1.0 + 1e-9, 2.0])}
    report = compare_gradients(analytic, numeric, tolerance=1e-4, abs_floor=1e-8)
    assert report.passed
    assert report.blocks["w"].max_relative_error == pytest.approx(1e-9, rel=1e-3)
    assert report.blocks["w"].worst_index == (0,)


def test_compare_gradients_abs_floor_only_gates_failure():
    """Test that a large relative error below the absolute floor still passes."""
    report = compare_gradients({"w": np.array([1e-10])}, {"w": np.array([3e-10])}, tolerance=1e-4, abs_floor=1e-8)
    assert report.passed
    assert report.blocks["w"].max_relative_error == pytest.approx(0.02)
    failing = compare_gradients({"w": np.array([1.0])}, {"w": np.array([1.01])}, tolerance=1e-4, abs_floor=1e-8)
    assert not failing.passed
    assert failing.failures == ["w"]
