"""Self-contained derivative engine: reverse mode over float64 arrays plus
truncated univariate Taylor forward mode (orders up to 3), composable so
that coordinate-derivative coefficients remain differentiable in the
parameters."""

from .graph import Node, apply, backward, batch_gradient_sqnorm, leaf, registered_primitives
from .ops import (
    add, affine, cos, dot, exp, linear, mean_, mul, neg, param_gradient,
    scale, sin, stack2, sub, sum_, tanh, value_of,
)
from .params import ParamLayout, ParamVector
from .taylor import MAX_ORDER, TaylorValue, taylor_eval

__all__ = [
    "Node", "leaf", "apply", "backward", "batch_gradient_sqnorm", "registered_primitives",
    "ParamLayout", "ParamVector",
    "TaylorValue", "taylor_eval", "MAX_ORDER",
    "add", "sub", "neg", "mul", "scale", "tanh", "sin", "cos", "exp",
    "affine", "linear", "dot", "stack2", "sum_", "mean_", "value_of", "param_gradient",
]
