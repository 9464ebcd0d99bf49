"""
Graph engine errors.

Shape and binding problems are reported with the identity of the node that
raised them so a failing computation can be traced back to its builder.
"""

from typing import Optional, Sequence, Tuple


class GraphError(ValueError):
    """Base class for graph construction and evaluation errors."""


class UnknownNodeError(GraphError):
    """A node handle does not belong to the graph it was used with."""


class UnboundInputError(GraphError):
    """An input node was not given a value at evaluation time."""

    def __init__(self, name: str):
        super().__init__(f"Input '{name}' is not bound")
        self.name = name


class ShapeMismatchError(GraphError):
    """Operand shapes are incompatible with a node's operation."""

    def __init__(
        self,
        node_id: int,
        op: str,
        label: Optional[str],
        shapes: Sequence[Tuple[int, ...]],
        detail: str = ""
    ):
        where = f"node #{node_id} ({op}" + (f" '{label}'" if label else "") + ")"
        message = f"Shape mismatch at {where}: operand shapes {list(shapes)}"
        if detail:
            message += f" - {detail}"
        super().__init__(message)
        self.node_id = node_id
        self.op = op
        self.label = label
        self.shapes = list(shapes)


class NonScalarOutputError(GraphError):
    """backward() was asked to differentiate a node that is not shape [1]."""
