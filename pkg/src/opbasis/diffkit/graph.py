"""Reverse-mode computation graph over float64 numpy arrays.

Every value in a graph is a :class:`Node` produced either by a registered
primitive or as a leaf (parameter tensor or captured constant).  Nodes are
numbered at creation; since parents always exist before their children, the
creation index is already a topological order, and the backward sweep walks
it in reverse.  This makes adjoint accumulation order deterministic, which
in turn makes training runs bit-reproducible.

Two reverse sweeps are provided:

* :func:`backward` accumulates ordinary adjoints (summed over the batch
  axis at parameter leaves).  Used for loss gradients.
* :func:`batch_gradient_sqnorm` keeps a leading batch axis in the adjoints
  of parameter leaves and returns, per batch row, the squared norm of the
  gradient of that row's output with respect to the selected parameters.
  Used for kernel diagonals, where one reverse pass per constraint point
  would be far too slow.

The weight matrices of dense layers enter graphs only through ``affine`` /
``linear``; elementwise primitives require operands of identical shape (or
a python scalar).  General broadcasting is deliberately not supported.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from ..errors import ShapeError, UnregisteredPrimitiveError

__all__ = [
    "Node",
    "leaf",
    "backward",
    "batch_gradient_sqnorm",
    "registered_primitives",
    "apply",
]

_COUNTER = itertools.count()

# Primitives that collapse the batch axis.  They may appear above a scalar
# loss but never inside a per-sample (kernel diagonal) sweep.
_BATCH_REDUCING = frozenset({"sum", "mean"})


def _as_f64(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


class Node:
    """One value in a reverse-mode graph.

    Parameters are leaves (``prim == "leaf"``) carrying ``leaf_name``; all
    other nodes store the callable that maps their output adjoint to parent
    adjoint contributions.
    """

    __slots__ = ("value", "parents", "vjp", "ps_vjp", "prim", "leaf_name", "idx")

    def __init__(self, value, parents=(), vjp=None, ps_vjp=None, prim="leaf", leaf_name=None):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.ps_vjp = ps_vjp
        self.prim = prim
        self.leaf_name = leaf_name
        self.idx = next(_COUNTER)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"Node({self.prim}, shape={self.value.shape}, idx={self.idx})"


def leaf(value, name: str | None = None) -> Node:
    """Wrap an array as a graph leaf; named leaves are parameter tensors."""
    return Node(_as_f64(value), prim="leaf", leaf_name=name)


def is_node(x) -> bool:
    return type(x) is Node


# ---------- coefficient-level arithmetic ----------
#
# These helpers accept Node or raw operands (ndarray / python float) and
# return a Node when any operand is a Node, otherwise a raw float64 result.
# The raw fast path means derivative-free evaluation never builds a graph.


def _val(x):
    return x.value if type(x) is Node else _as_f64(x)


def _check_elementwise(a, b, op):
    av, bv = _val(a), _val(b)
    if av.shape != bv.shape and av.ndim != 0 and bv.ndim != 0:
        raise ShapeError(f"{op}: operand shapes {av.shape} and {bv.shape} differ")


def c_add(a, b):
    _check_elementwise(a, b, "add")
    if type(a) is Node or type(b) is Node:
        if type(a) is Node and type(b) is Node:
            return Node(a.value + b.value, (a, b), lambda g: (g, g), prim="add")
        n, c = (a, _val(b)) if type(a) is Node else (b, _val(a))
        return Node(n.value + c, (n,), lambda g: (g,), prim="add")
    return _val(a) + _val(b)


def c_sub(a, b):
    _check_elementwise(a, b, "sub")
    if type(a) is Node and type(b) is Node:
        return Node(a.value - b.value, (a, b), lambda g: (g, -g), prim="sub")
    if type(a) is Node:
        c = _val(b)
        return Node(a.value - c, (a,), lambda g: (g,), prim="sub")
    if type(b) is Node:
        c = _val(a)
        return Node(c - b.value, (b,), lambda g: (-g,), prim="sub")
    return _val(a) - _val(b)


def c_neg(a):
    if type(a) is Node:
        return Node(-a.value, (a,), lambda g: (-g,), prim="neg")
    return -_val(a)


def c_mul(a, b):
    _check_elementwise(a, b, "mul")
    if type(a) is Node and type(b) is Node:
        av, bv = a.value, b.value
        return Node(av * bv, (a, b), lambda g: (g * bv, g * av), prim="mul")
    if type(a) is Node:
        c = _val(b)
        return Node(a.value * c, (a,), lambda g: (g * c,), prim="mul")
    if type(b) is Node:
        c = _val(a)
        return Node(c * b.value, (b,), lambda g: (g * c,), prim="mul")
    return _val(a) * _val(b)


def c_scale(a, s: float):
    """Multiply by a python scalar (no graph edge for the scalar)."""
    s = float(s)
    if type(a) is Node:
        return Node(a.value * s, (a,), lambda g: (g * s,), prim="scale")
    return _val(a) * s


def c_tanh(a):
    if type(a) is Node:
        t = np.tanh(a.value)
        return Node(t, (a,), lambda g: (g * (1.0 - t * t),), prim="tanh")
    return np.tanh(_val(a))


def c_sin(a):
    if type(a) is Node:
        s, c = np.sin(a.value), np.cos(a.value)
        return Node(s, (a,), lambda g: (g * c,), prim="sin")
    return np.sin(_val(a))


def c_cos(a):
    if type(a) is Node:
        s, c = np.sin(a.value), np.cos(a.value)
        return Node(c, (a,), lambda g: (-g * s,), prim="cos")
    return np.cos(_val(a))


def c_exp(a):
    if type(a) is Node:
        e = np.exp(a.value)
        return Node(e, (a,), lambda g: (g * e,), prim="exp")
    return np.exp(_val(a))


def _affine_like(x, w, b, with_bias: bool):
    xv, wv = _val(x), _val(w)
    if xv.ndim != 2 or wv.ndim != 2 or xv.shape[1] != wv.shape[0]:
        raise ShapeError(f"affine: input {xv.shape} incompatible with weight {wv.shape}")
    if with_bias:
        bv = _val(b)
        if bv.shape != (wv.shape[1],):
            raise ShapeError(f"affine: bias {bv.shape} incompatible with weight {wv.shape}")
        out = xv @ wv + bv
    else:
        out = xv @ wv

    any_node = type(x) is Node or type(w) is Node or (with_bias and type(b) is Node)
    if not any_node:
        return out

    parents = []
    roles = []  # parallel markers: "x" | "w" | "b"
    if type(x) is Node:
        parents.append(x)
        roles.append("x")
    if type(w) is Node:
        parents.append(w)
        roles.append("w")
    if with_bias and type(b) is Node:
        parents.append(b)
        roles.append("b")

    def vjp(g):
        out_ = []
        for r in roles:
            if r == "x":
                out_.append(g @ wv.T)
            elif r == "w":
                out_.append(xv.T @ g)
            else:
                out_.append(g.sum(axis=0))
        return tuple(out_)

    def ps_vjp(g, need):
        # g has shape (B, m); parameter contributions keep the batch axis.
        out_ = []
        for r, nd in zip(roles, need):
            if not nd:
                out_.append(None)
            elif r == "x":
                out_.append(g @ wv.T)
            elif r == "w":
                out_.append(np.einsum("bn,bm->bnm", xv, g))
            else:
                out_.append(g)
        return tuple(out_)

    prim = "affine" if with_bias else "linear"
    return Node(out, tuple(parents), vjp, ps_vjp, prim=prim)


def c_affine(x, w, b):
    return _affine_like(x, w, b, with_bias=True)


def c_linear(x, w):
    return _affine_like(x, w, None, with_bias=False)


def c_dot(a, b):
    """Row-wise dot product: (B, w) x (B, w) -> (B,)."""
    av, bv = _val(a), _val(b)
    if av.shape != bv.shape or av.ndim != 2:
        raise ShapeError(f"dot: expected matching 2-d operands, got {av.shape} and {bv.shape}")
    out = np.einsum("bw,bw->b", av, bv)
    if type(a) is Node and type(b) is Node:
        return Node(out, (a, b), lambda g: (g[:, None] * bv, g[:, None] * av), prim="dot")
    if type(a) is Node:
        return Node(out, (a,), lambda g: (g[:, None] * bv,), prim="dot")
    if type(b) is Node:
        return Node(out, (b,), lambda g: (g[:, None] * av,), prim="dot")
    return out


def c_stack2(a, b):
    """Column-stack two (B, 1) values into (B, 2); used to assemble
    per-coordinate jets into a network input."""
    av, bv = _val(a), _val(b)
    if av.ndim != 2 or av.shape[1] != 1 or av.shape != bv.shape:
        raise ShapeError(f"stack2 expects matching (B, 1) operands, got {av.shape} and {bv.shape}")
    out = np.concatenate([av, bv], axis=1)
    if type(a) is Node and type(b) is Node:
        return Node(out, (a, b), lambda g: (g[:, :1], g[:, 1:]), prim="stack2")
    if type(a) is Node:
        return Node(out, (a,), lambda g: (g[:, :1],), prim="stack2")
    if type(b) is Node:
        return Node(out, (b,), lambda g: (g[:, 1:],), prim="stack2")
    return out


def c_sum(a):
    if type(a) is Node:
        shp = a.value.shape
        return Node(np.asarray(a.value.sum()), (a,), lambda g: (np.broadcast_to(g, shp).copy(),), prim="sum")
    return np.asarray(_val(a).sum())


def c_mean(a):
    if type(a) is Node:
        shp = a.value.shape
        n = a.value.size
        return Node(np.asarray(a.value.mean()), (a,), lambda g: (np.broadcast_to(g / n, shp).copy(),), prim="mean")
    return np.asarray(_val(a).mean())


_REGISTRY: dict[str, Callable] = {
    "add": c_add,
    "sub": c_sub,
    "neg": c_neg,
    "mul": c_mul,
    "scale": c_scale,
    "tanh": c_tanh,
    "sin": c_sin,
    "cos": c_cos,
    "exp": c_exp,
    "affine": c_affine,
    "linear": c_linear,
    "dot": c_dot,
    "stack2": c_stack2,
    "sum": c_sum,
    "mean": c_mean,
}


def registered_primitives() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def apply(name: str, *args):
    """Apply a primitive by name; unknown names are rejected."""
    try:
        fn = _REGISTRY[name]
    except KeyError:
        raise UnregisteredPrimitiveError(
            f"'{name}' is not a registered primitive; known: {', '.join(sorted(_REGISTRY))}"
        ) from None
    return fn(*args)


# ---------- reverse sweeps ----------


def _reachable(root: Node) -> list[Node]:
    """All nodes reachable from ``root``, in ascending creation order."""
    seen: dict[int, Node] = {id(root): root}
    stack = [root]
    while stack:
        n = stack.pop()
        for p in n.parents:
            if id(p) not in seen:
                seen[id(p)] = p
                stack.append(p)
    return sorted(seen.values(), key=lambda n: n.idx)


def backward(root: Node, seed: np.ndarray | None = None) -> dict[int, np.ndarray]:
    """Ordinary reverse sweep; returns adjoints of parameter leaves by id."""
    order = _reachable(root)
    adj: dict[int, np.ndarray] = {id(root): np.ones_like(root.value) if seed is None else seed}
    grads: dict[int, np.ndarray] = {}
    for n in reversed(order):
        g = adj.pop(id(n), None)
        if g is None:
            continue
        if n.leaf_name is not None:
            prev = grads.get(id(n))
            grads[id(n)] = g if prev is None else prev + g
            continue
        if n.vjp is None:
            continue
        for p, c in zip(n.parents, n.vjp(g)):
            if c is None:
                continue
            prev = adj.get(id(p))
            adj[id(p)] = c if prev is None else prev + c
    return grads


def batch_gradient_sqnorm(
    term: Node,
    include: Sequence[Node],
) -> np.ndarray:
    """Per-row squared gradient norm of a batch of scalar outputs.

    ``term`` must have shape (B,), with row b depending only on row b of the
    batch-carrying intermediates (parameters are shared across rows).
    Returns an array of shape (B,) whose entry b is
    ``sum_p |d term[b] / d p|^2`` over the leaves in ``include``.
    """
    if term.value.ndim != 1:
        raise ShapeError(f"per-sample sweep expects a (B,) output, got shape {term.value.shape}")
    B = term.value.shape[0]
    inc_ids = {id(n) for n in include}
    order = _reachable(term)

    # A node needs an adjoint only if an included leaf is reachable from it.
    touches: dict[int, bool] = {}
    for n in order:  # parents precede children
        t = id(n) in inc_ids
        if not t:
            for p in n.parents:
                if touches.get(id(p), False):
                    t = True
                    break
        touches[id(n)] = t
    if not touches[id(term)]:
        return np.zeros(B)

    adj: dict[int, np.ndarray] = {id(term): np.ones(B)}
    acc: dict[int, np.ndarray] = {}
    for n in reversed(order):
        if not touches[id(n)]:
            continue
        g = adj.pop(id(n), None)
        if g is None:
            continue
        if n.leaf_name is not None:
            if id(n) in inc_ids:
                if g.shape != (B,) + n.value.shape:
                    raise ShapeError(
                        f"leaf '{n.leaf_name}' received a non-batched adjoint of shape {g.shape}; "
                        "parameters may enter per-sample graphs only through affine/linear"
                    )
                prev = acc.get(id(n))
                acc[id(n)] = g if prev is None else prev + g
            continue
        if n.prim in _BATCH_REDUCING:
            raise ShapeError(f"primitive '{n.prim}' collapses the batch axis; not allowed in per-sample sweeps")
        need = tuple(touches.get(id(p), False) for p in n.parents)
        if n.ps_vjp is not None:
            contribs = n.ps_vjp(g, need)
        else:
            contribs = n.vjp(g)
        for p, c, nd in zip(n.parents, contribs, need):
            if c is None or not nd:
                continue
            prev = adj.get(id(p))
            adj[id(p)] = c if prev is None else prev + c

    out = np.zeros(B)
    for a in acc.values():
        out += np.einsum("bi,bi->b", a.reshape(B, -1), a.reshape(B, -1))
    return out
