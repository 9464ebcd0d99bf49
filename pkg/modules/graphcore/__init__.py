"""
Reverse-mode differentiation engine over dense float64 tensors.
"""

from .errors import (
    GraphError,
    NonScalarOutputError,
    ShapeMismatchError,
    UnboundInputError,
    UnknownNodeError,
)
from .graph import (
    OPERATIONS,
    Evaluation,
    GradientMap,
    Graph,
    Node,
    Program,
    Tensor,
    as_tensor,
    backward,
    evaluate,
    vector_jacobian,
)
from .gradcheck import (
    BlockCheck,
    GradCheckReport,
    compare_gradients,
    finite_difference_gradient,
    grad_check,
)

__all__ = [
    'OPERATIONS',
    'Evaluation',
    'GradientMap',
    'Graph',
    'Node',
    'Program',
    'Tensor',
    'as_tensor',
    'backward',
    'evaluate',
    'vector_jacobian',
    'BlockCheck',
    'GradCheckReport',
    'compare_gradients',
    'finite_difference_gradient',
    'grad_check',
    'GraphError',
    'NonScalarOutputError',
    'ShapeMismatchError',
    'UnboundInputError',
    'UnknownNodeError',
]
