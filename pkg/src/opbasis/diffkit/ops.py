"""Type-dispatching algebra: one set of helpers for raw arrays, graph
nodes, and Taylor series.

Model code is written once against these functions and works in three
regimes: plain numpy evaluation (no operand is a Node), reverse-mode
differentiable evaluation (Node operands), and jet propagation for
coordinate derivatives (TaylorValue operands, possibly with Node
coefficients so both modes compose).
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import graph as g
from . import taylor as t
from .graph import Node
from .params import ParamVector
from .taylor import TaylorValue

__all__ = [
    "add", "sub", "neg", "mul", "scale", "tanh", "sin", "cos", "exp",
    "affine", "linear", "dot", "stack2", "sum_", "mean_", "value_of", "param_gradient",
]


def _tv(x) -> bool:
    return type(x) is TaylorValue


def add(a, b):
    if _tv(a) or _tv(b):
        return t.t_add(a, b)
    return g.c_add(a, b)


def sub(a, b):
    if _tv(a) or _tv(b):
        return t.t_sub(a, b)
    return g.c_sub(a, b)


def neg(a):
    if _tv(a):
        return t.t_neg(a)
    return g.c_neg(a)


def mul(a, b):
    if _tv(a) or _tv(b):
        return t.t_mul(a, b)
    return g.c_mul(a, b)


def scale(a, s: float):
    if _tv(a):
        return t.t_scale(a, s)
    return g.c_scale(a, s)


def tanh(a):
    if _tv(a):
        return t.t_tanh(a)
    return g.c_tanh(a)


def sin(a):
    if _tv(a):
        return t.t_sin(a)
    return g.c_sin(a)


def cos(a):
    if _tv(a):
        return t.t_cos(a)
    return g.c_cos(a)


def exp(a):
    if _tv(a):
        return t.t_exp(a)
    return g.c_exp(a)


def affine(x, w, b):
    if _tv(x):
        return t.t_affine(x, w, b)
    return g.c_affine(x, w, b)


def linear(x, w):
    if _tv(x):
        return t.t_linear(x, w)
    return g.c_linear(x, w)


def dot(a, b):
    if _tv(a) or _tv(b):
        return t.t_dot(a, b)
    return g.c_dot(a, b)


def stack2(a, b):
    if _tv(a) or _tv(b):
        return t.t_stack2(a, b)
    return g.c_stack2(a, b)


def sum_(a):
    return g.c_sum(a)


def mean_(a):
    return g.c_mean(a)


def value_of(x) -> np.ndarray:
    """Underlying float64 array of a raw value or Node (order-0 of a series)."""
    if _tv(x):
        x = x.coeffs[0]
    return x.value if type(x) is Node else np.asarray(x, dtype=np.float64)


def param_gradient(loss: Node, params: ParamVector) -> ParamVector:
    """Gradient of a scalar loss with respect to every tensor in ``params``.

    Leaves are matched by name; parameters the loss does not reach get a
    zero gradient.  The reverse sweep visits nodes in one fixed order, so
    repeated calls on the same graph are bitwise identical.
    """
    if type(loss) is not Node:
        raise ShapeError("param_gradient expects a Node loss")
    if loss.value.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.value.shape}")
    grads_by_id = g.backward(loss, seed=np.ones_like(loss.value))

    # Map leaf ids back to names via the graph (leaves carry their name).
    by_name: dict[str, np.ndarray] = {}
    for n in g._reachable(loss):
        if n.leaf_name is not None and id(n) in grads_by_id:
            prev = by_name.get(n.leaf_name)
            cur = grads_by_id[id(n)]
            by_name[n.leaf_name] = cur if prev is None else prev + cur

    out = ParamVector.zeros(params.layout)
    for name in params.layout.names:
        if name in by_name:
            gv = by_name[name]
            if gv.shape != params.view(name).shape:
                raise ShapeError(f"gradient shape {gv.shape} for '{name}' does not match parameter")
            out.view(name)[...] = gv
    return out
