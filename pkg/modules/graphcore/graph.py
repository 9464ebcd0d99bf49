"""
Static Computation Graph with Reverse-Mode Differentiation

A Graph is an append-only list of nodes; construction order is a topological
order because every operand must exist before the node that consumes it.
Evaluation binds the input nodes to float64 arrays and computes every node in
order. Differentiation walks the same list backwards accumulating adjoints.

Operand shapes follow numpy broadcasting and matmul semantics, so a graph
built with negative axes evaluates unchanged on a single example ([1, n] rows)
or on a mini-batch (a leading batch dimension).
"""

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from .errors import (
    GraphError,
    NonScalarOutputError,
    ShapeMismatchError,
    UnboundInputError,
    UnknownNodeError,
)

# Dense row-major float64 array; rank-0 results are promoted to shape [1].
Tensor = np.ndarray

# Parameter/input name -> gradient of identical shape.
GradientMap = Dict[str, np.ndarray]

OPERATIONS = frozenset({
    "input", "constant", "matmul", "add", "multiply", "sigmoid", "tanh",
    "exp", "log", "softmax", "sum", "mean", "concat", "slice", "scale", "square",
})


def as_tensor(value: Any) -> Tensor:
    """Convert a value to a float64 array with at least one dimension."""
    array = np.asarray(value, dtype=np.float64)
    if array.ndim == 0:
        array = array.reshape(1)
    return array


@dataclass(frozen=True, eq=False)
class Node:
    """One operation in a Graph. Compared and hashed by identity."""
    id: int
    op: str
    operands: Tuple[int, ...] = ()
    attrs: Mapping[str, Any] = field(default_factory=dict)
    label: Optional[str] = None
    owner: int = 0

    @property
    def key(self) -> str:
        """Identifier used in gradient maps: input name, label, or '#id'."""
        if self.op == "input":
            return self.attrs["name"]
        return self.label or f"#{self.id}"


class Graph:
    """Append-only DAG of tensor operations."""

    def __init__(self, name: str = ""):
        self.name = name
        self._nodes: List[Node] = []
        self._inputs: Dict[str, Node] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def nodes(self) -> Tuple[Node, ...]:
        return tuple(self._nodes)

    @property
    def inputs(self) -> Mapping[str, Node]:
        return MappingProxyType(self._inputs)

    def resolve(self, ref: Union[Node, str]) -> Node:
        """Return the node for a handle or an input name."""
        if isinstance(ref, str):
            if ref not in self._inputs:
                raise UnknownNodeError(f"No input named '{ref}' in graph '{self.name}'")
            return self._inputs[ref]
        if (
            not isinstance(ref, Node)
            or ref.owner != id(self)
            or ref.id >= len(self._nodes)
            or self._nodes[ref.id] is not ref
        ):
            raise UnknownNodeError(f"Node {ref!r} does not belong to graph '{self.name}'")
        return ref

    def _add(self, op: str, operands: Sequence[Node] = (), label: Optional[str] = None, **attrs) -> Node:
        ids = tuple(self.resolve(operand).id for operand in operands)
        node = Node(len(self._nodes), op, ids, attrs, label, id(self))
        self._nodes.append(node)
        return node

    # ------------------------------------------------------------------
    # Leaves
    # ------------------------------------------------------------------

    def input(self, name: str, shape: Optional[Sequence[Optional[int]]] = None) -> Node:
        """
        Declare a bound input.

        Args:
            name: Unique binding name
            shape: Optional trailing shape; None entries match any size

        Returns:
            The input node
        """
        if name in self._inputs:
            raise GraphError(f"Duplicate input '{name}' in graph '{self.name}'")
        node = self._add("input", (), label=name, name=name, shape=None if shape is None else tuple(shape))
        self._inputs[name] = node
        return node

    def parameter(self, name: str, shape: Optional[Sequence[Optional[int]]] = None) -> Node:
        """Return the input called name, declaring it on first use."""
        if name in self._inputs:
            return self._inputs[name]
        return self.input(name, shape)

    def constant(self, value: Any, label: Optional[str] = None) -> Node:
        array = as_tensor(value).copy()
        array.setflags(write=False)
        return self._add("constant", (), label=label, value=array)

    # ------------------------------------------------------------------
    # Operations
    # ------------------------------------------------------------------

    def matmul(self, a: Node, b: Node, label: Optional[str] = None) -> Node:
        return self._add("matmul", (a, b), label)

    def add(self, a: Node, b: Node, label: Optional[str] = None) -> Node:
        return self._add("add", (a, b), label)

    def multiply(self, a: Node, b: Node, label: Optional[str] = None) -> Node:
        return self._add("multiply", (a, b), label)

    def sigmoid(self, a: Node, label: Optional[str] = None) -> Node:
        return self._add("sigmoid", (a,), label)

    def tanh(self, a: Node, label: Optional[str] = None) -> Node:
        return self._add("tanh", (a,), label)

    def exp(self, a: Node, label: Optional[str] = None) -> Node:
        return self._add("exp", (a,), label)

    def log(self, a: Node, label: Optional[str] = None) -> Node:
        return self._add("log", (a,), label)

    def softmax(self, a: Node, axis: int = -1, label: Optional[str] = None) -> Node:
        return self._add("softmax", (a,), label, axis=axis)

    def sum(self, a: Node, axis: Optional[int] = None, keepdims: bool = False, label: Optional[str] = None) -> Node:
        return self._add("sum", (a,), label, axis=axis, keepdims=keepdims)

    def mean(self, a: Node, axis: Optional[int] = None, keepdims: bool = False, label: Optional[str] = None) -> Node:
        return self._add("mean", (a,), label, axis=axis, keepdims=keepdims)

    def concat(self, parts: Sequence[Node], axis: int = -1, label: Optional[str] = None) -> Node:
        if not parts:
            raise GraphError("concat needs at least one operand")
        return self._add("concat", tuple(parts), label, axis=axis)

    def slice(self, a: Node, start: int, stop: int, axis: int = -1, label: Optional[str] = None) -> Node:
        if not 0 <= start < stop:
            raise GraphError(f"Invalid slice [{start}:{stop}]")
        return self._add("slice", (a,), label, start=start, stop=stop, axis=axis)

    def scale(self, a: Node, factor: float, label: Optional[str] = None) -> Node:
        return self._add("scale", (a,), label, factor=float(factor))

    def square(self, a: Node, label: Optional[str] = None) -> Node:
        return self._add("square", (a,), label)

    def sub(self, a: Node, b: Node, label: Optional[str] = None) -> Node:
        """a - b, expressed with add and scale."""
        return self.add(a, self.scale(b, -1.0), label)


class Evaluation:
    """Forward values of every node of a graph for one set of bindings."""

    def __init__(self, graph: Graph, values: Sequence[np.ndarray]):
        self.graph = graph
        self.values = tuple(values)

    def __getitem__(self, ref: Union[Node, str]) -> np.ndarray:
        return self.values[self.graph.resolve(ref).id]

    def pick(self, nodes: Mapping[str, Node]) -> Dict[str, np.ndarray]:
        return {name: self[node] for name, node in nodes.items()}


class Program(NamedTuple):
    """A graph together with the named nodes callers read back."""
    graph: Graph
    outputs: Mapping[str, Node]

    def run(self, bindings: Mapping[str, Any]) -> Dict[str, np.ndarray]:
        return evaluate(self.graph, bindings).pick(self.outputs)


# ----------------------------------------------------------------------
# Forward
# ----------------------------------------------------------------------

def _axis(axis: int, ndim: int) -> int:
    normalized = axis + ndim if axis < 0 else axis
    if not 0 <= normalized < ndim:
        raise IndexError(f"axis {axis} out of range for rank {ndim}")
    return normalized


def _promote(array: np.ndarray) -> np.ndarray:
    return array.reshape(1) if array.ndim == 0 else array


def _softmax(a: np.ndarray, axis: int) -> np.ndarray:
    shifted = a - a.max(axis=axis, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=axis, keepdims=True)


def _check_declared_shape(node: Node, value: np.ndarray) -> None:
    declared = node.attrs.get("shape")
    if declared is None:
        return
    actual = value.shape[len(value.shape) - len(declared):] if len(declared) <= value.ndim else None
    if actual is None or any(d is not None and d != a for d, a in zip(declared, actual)):
        raise ShapeMismatchError(node.id, node.op, node.label, [value.shape], f"declared trailing shape {declared}")


def _forward(node: Node, args: List[np.ndarray]) -> np.ndarray:
    op = node.op
    if op == "matmul":
        return _promote(np.matmul(args[0], args[1]))
    if op == "add":
        return args[0] + args[1]
    if op == "multiply":
        return args[0] * args[1]
    if op == "sigmoid":
        return expit(args[0])
    if op == "tanh":
        return np.tanh(args[0])
    if op == "exp":
        return np.exp(args[0])
    if op == "log":
        return np.log(args[0])
    if op == "softmax":
        return _softmax(args[0], _axis(node.attrs["axis"], args[0].ndim))
    if op in ("sum", "mean"):
        axis = node.attrs["axis"]
        if axis is not None:
            axis = _axis(axis, args[0].ndim)
        reduce = np.sum if op == "sum" else np.mean
        return _promote(reduce(args[0], axis=axis, keepdims=node.attrs["keepdims"]))
    if op == "concat":
        return np.concatenate(args, axis=node.attrs["axis"])
    if op == "slice":
        a = args[0]
        axis = _axis(node.attrs["axis"], a.ndim)
        if node.attrs["stop"] > a.shape[axis]:
            raise ValueError(f"slice stop {node.attrs['stop']} beyond axis size {a.shape[axis]}")
        index = [slice(None)] * a.ndim
        index[axis] = slice(node.attrs["start"], node.attrs["stop"])
        return a[tuple(index)]
    if op == "scale":
        return args[0] * node.attrs["factor"]
    if op == "square":
        return args[0] * args[0]
    raise GraphError(f"Unknown operation '{op}'")


def evaluate(graph: Graph, bindings: Mapping[str, Any]) -> Evaluation:
    """
    Compute the value of every node.

    Args:
        graph: Graph to evaluate
        bindings: Input name -> array. Names without a matching input are ignored.

    Returns:
        Evaluation holding one array per node, in node order

    Raises:
        UnboundInputError: An input node has no binding
        ShapeMismatchError: An operation received incompatible operand shapes
    """
    values: List[np.ndarray] = []
    for node in graph.nodes:
        if node.op == "input":
            name = node.attrs["name"]
            if name not in bindings:
                raise UnboundInputError(name)
            value = as_tensor(bindings[name])
            _check_declared_shape(node, value)
        elif node.op == "constant":
            value = node.attrs["value"]
        else:
            args = [values[i] for i in node.operands]
            try:
                value = _forward(node, args)
            except (ValueError, IndexError) as exc:
                raise ShapeMismatchError(node.id, node.op, node.label, [a.shape for a in args], str(exc)) from exc
        values.append(value)
    return Evaluation(graph, values)


# ----------------------------------------------------------------------
# Reverse
# ----------------------------------------------------------------------

def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _matmul_grads(a: np.ndarray, b: np.ndarray, g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if a.ndim == 1 and b.ndim == 1:
        g0 = g.reshape(())
        return g0 * b, g0 * a
    a2 = a[np.newaxis, :] if a.ndim == 1 else a
    b2 = b[:, np.newaxis] if b.ndim == 1 else b
    g2 = g
    if a.ndim == 1:
        g2 = np.expand_dims(g2, -2)
    if b.ndim == 1:
        g2 = np.expand_dims(g2, -1)
    ga = np.matmul(g2, np.swapaxes(b2, -1, -2))
    gb = np.matmul(np.swapaxes(a2, -1, -2), g2)
    if a.ndim == 1:
        ga = np.squeeze(ga, -2)
    if b.ndim == 1:
        gb = np.squeeze(gb, -1)
    return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


def _kept_shape(shape: Tuple[int, ...], axis: Optional[int]) -> Tuple[int, ...]:
    if axis is None:
        return (1,) * len(shape)
    axis = _axis(axis, len(shape))
    return tuple(1 if i == axis else size for i, size in enumerate(shape))


def _backward(node: Node, args: List[np.ndarray], out: np.ndarray, g: np.ndarray) -> Sequence[np.ndarray]:
    op = node.op
    if op == "matmul":
        return _matmul_grads(args[0], args[1], g)
    if op == "add":
        return _unbroadcast(g, args[0].shape), _unbroadcast(g, args[1].shape)
    if op == "multiply":
        a, b = args
        return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)
    if op == "sigmoid":
        return (g * out * (1.0 - out),)
    if op == "tanh":
        return (g * (1.0 - out * out),)
    if op == "exp":
        return (g * out,)
    if op == "log":
        return (g / args[0],)
    if op == "softmax":
        axis = _axis(node.attrs["axis"], out.ndim)
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)
    if op in ("sum", "mean"):
        a = args[0]
        kept = _kept_shape(a.shape, node.attrs["axis"])
        grad = np.broadcast_to(g.reshape(kept), a.shape)
        if op == "mean":
            grad = grad / (a.size // int(np.prod(kept)))
        return (np.array(grad),)
    if op == "concat":
        axis = _axis(node.attrs["axis"], out.ndim)
        bounds = np.cumsum([a.shape[axis] for a in args])[:-1]
        return tuple(np.split(g, bounds, axis=axis))
    if op == "slice":
        a = args[0]
        axis = _axis(node.attrs["axis"], a.ndim)
        grad = np.zeros_like(a)
        index = [slice(None)] * a.ndim
        index[axis] = slice(node.attrs["start"], node.attrs["stop"])
        grad[tuple(index)] = g
        return (grad,)
    if op == "scale":
        return (g * node.attrs["factor"],)
    if op == "square":
        return (2.0 * args[0] * g,)
    raise GraphError(f"No gradient rule for '{op}'")


def vector_jacobian(
    evaluation: Evaluation,
    seeds: Mapping[Node, Any],
    wrt: Iterable[Union[Node, str]]
) -> GradientMap:
    """
    Reverse-mode vector-Jacobian product.

    Computes sum_k <seed_k, d node_k / d w> for every requested node w. Each
    seed is broadcast to its node's value shape.

    Args:
        evaluation: Forward values from evaluate()
        seeds: Output node -> adjoint seed
        wrt: Nodes (or input names) to differentiate with respect to

    Returns:
        GradientMap keyed by Node.key, one entry per distinct requested node
    """
    graph = evaluation.graph
    targets: List[Node] = []
    for ref in wrt:
        node = graph.resolve(ref)
        if node not in targets:
            targets.append(node)

    active = {node.id for node in targets}
    for node in graph.nodes:
        if any(i in active for i in node.operands):
            active.add(node.id)

    adjoints: Dict[int, np.ndarray] = {}
    for ref, seed in seeds.items():
        node = graph.resolve(ref)
        value = evaluation.values[node.id]
        seed = np.broadcast_to(as_tensor(seed), value.shape).astype(np.float64)
        adjoints[node.id] = adjoints[node.id] + seed if node.id in adjoints else seed

    for node in reversed(graph.nodes):
        g = adjoints.get(node.id)
        if g is None or not node.operands or node.id not in active:
            continue
        args = [evaluation.values[i] for i in node.operands]
        grads = _backward(node, args, evaluation.values[node.id], g)
        for operand_id, grad in zip(node.operands, grads):
            if operand_id not in active:
                continue
            if operand_id in adjoints:
                adjoints[operand_id] = adjoints[operand_id] + grad
            else:
                adjoints[operand_id] = grad

    return {
        node.key: adjoints[node.id] if node.id in adjoints else np.zeros_like(evaluation.values[node.id])
        for node in targets
    }


def backward(
    graph: Graph,
    evaluation: Evaluation,
    output: Union[Node, str],
    wrt: Iterable[Union[Node, str]]
) -> GradientMap:
    """
    Exact gradient of a scalar node with respect to the requested nodes.

    Raises:
        NonScalarOutputError: output does not have shape [1]
        UnknownNodeError: output or a wrt node is not part of graph
    """
    if evaluation.graph is not graph:
        raise UnknownNodeError("Evaluation was computed on a different graph")
    node = graph.resolve(output)
    shape = evaluation.values[node.id].shape
    if shape != (1,):
        raise NonScalarOutputError(f"Output {node.key} has shape {list(shape)}, expected [1]")
    return vector_jacobian(evaluation, {node: 1.0}, wrt)
