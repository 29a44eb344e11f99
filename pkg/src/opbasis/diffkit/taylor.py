"""Truncated univariate Taylor forward mode, composable with reverse mode.

A :class:`TaylorValue` carries coefficients ``c_0 .. c_K`` of a series
``v(eps) = sum_j c_j eps^j`` truncated at order ``K <= 3``, so coordinate
derivatives come out as ``d^j v = j! c_j``.  Coefficients may be raw arrays
(derivative-free evaluation) or graph nodes; when they are nodes, reverse
mode through any coefficient yields its parameter gradient, which is what
lets a PDE residual built from these series be differentiated in the
network parameters.

Nonlinear primitives propagate by series identities: products use the
Cauchy convolution and ``tanh``/``sin``/``cos``/``exp`` use their ODE
recurrences (e.g. ``tanh' = 1 - tanh^2``) applied to truncated series, so
no symbolic higher derivatives of the activations are ever formed.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from ..errors import DerivativeOrderError, ShapeError
from . import graph as g

__all__ = ["TaylorValue", "MAX_ORDER", "taylor_eval"]

MAX_ORDER = 3


def _is_tv(x) -> bool:
    return type(x) is TaylorValue


class TaylorValue:
    """Truncated Taylor series with Node or raw float64 coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Sequence):
        coeffs = tuple(coeffs)
        if not 1 <= len(coeffs) <= MAX_ORDER + 1:
            raise DerivativeOrderError(
                f"TaylorValue supports orders 0..{MAX_ORDER}, got {len(coeffs) - 1}"
            )
        self.coeffs = coeffs

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def coeff(self, j: int):
        """j-th series coefficient (zero beyond the truncation order)."""
        if j <= self.order:
            return self.coeffs[j]
        c0 = self.coeffs[0]
        v = c0.value if type(c0) is g.Node else np.asarray(c0)
        return np.zeros_like(v)

    def derivative(self, j: int):
        """j-th derivative along the expansion direction: ``j! * c_j``."""
        if j == 0:
            return self.coeff(0)
        return g.c_scale(self.coeff(j), float(math.factorial(j)))

    # Unsupported conversions fail loudly rather than silently degrading
    # to a float of the zeroth coefficient.
    def __float__(self):
        raise TypeError("TaylorValue cannot be coerced to float; use .coeff(0)")

    def __bool__(self):
        raise TypeError("TaylorValue has no truth value")

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"TaylorValue(order={self.order})"


def _order(*tvs: TaylorValue) -> int:
    return max(tv.order for tv in tvs)


def t_add(a, b):
    if _is_tv(a) and _is_tv(b):
        K = _order(a, b)
        return TaylorValue([g.c_add(a.coeff(j), b.coeff(j)) for j in range(K + 1)])
    if _is_tv(a):
        return TaylorValue([g.c_add(a.coeffs[0], b)] + list(a.coeffs[1:]))
    return TaylorValue([g.c_add(a, b.coeffs[0])] + list(b.coeffs[1:]))


def t_sub(a, b):
    if _is_tv(a) and _is_tv(b):
        K = _order(a, b)
        return TaylorValue([g.c_sub(a.coeff(j), b.coeff(j)) for j in range(K + 1)])
    if _is_tv(a):
        return TaylorValue([g.c_sub(a.coeffs[0], b)] + list(a.coeffs[1:]))
    return TaylorValue([g.c_sub(a, b.coeffs[0])] + [g.c_neg(c) for c in b.coeffs[1:]])


def t_neg(a):
    return TaylorValue([g.c_neg(c) for c in a.coeffs])


def t_scale(a, s: float):
    return TaylorValue([g.c_scale(c, s) for c in a.coeffs])


def t_mul(a, b):
    if _is_tv(a) and _is_tv(b):
        K = _order(a, b)
        out = []
        for k in range(K + 1):
            terms = [g.c_mul(a.coeff(i), b.coeff(k - i)) for i in range(k + 1)
                     if i <= a.order and (k - i) <= b.order]
            acc = terms[0]
            for t in terms[1:]:
                acc = g.c_add(acc, t)
            out.append(acc)
        return TaylorValue(out)
    if _is_tv(a):
        return TaylorValue([g.c_mul(c, b) for c in a.coeffs])
    return TaylorValue([g.c_mul(a, c) for c in b.coeffs])


def t_tanh(u: TaylorValue) -> TaylorValue:
    """tanh of a series via  k v_k = sum_{i=1..k} i u_i w_{k-i},  w = 1 - v^2."""
    K = u.order
    v = [g.c_tanh(u.coeffs[0])]
    if K == 0:
        return TaylorValue(v)
    # w_j depends on v_0..v_j, needed up to j = K-1.
    w = [g.c_sub(1.0, g.c_mul(v[0], v[0]))]
    for k in range(1, K + 1):
        terms = [g.c_scale(g.c_mul(u.coeff(i), w[k - i]), i / k) for i in range(1, k + 1)]
        acc = terms[0]
        for t in terms[1:]:
            acc = g.c_add(acc, t)
        v.append(acc)
        if k < K:
            # w_k = -(sum_{a+b=k} v_a v_b)
            prods = [g.c_mul(v[a], v[k - a]) for a in range(k + 1)]
            s = prods[0]
            for p in prods[1:]:
                s = g.c_add(s, p)
            w.append(g.c_neg(s))
    return TaylorValue(v)


def t_exp(u: TaylorValue) -> TaylorValue:
    """exp of a series via  k e_k = sum_{i=1..k} i u_i e_{k-i}."""
    K = u.order
    e = [g.c_exp(u.coeffs[0])]
    for k in range(1, K + 1):
        terms = [g.c_scale(g.c_mul(u.coeff(i), e[k - i]), i / k) for i in range(1, k + 1)]
        acc = terms[0]
        for t in terms[1:]:
            acc = g.c_add(acc, t)
        e.append(acc)
    return TaylorValue(e)


def _t_sincos(u: TaylorValue) -> tuple[TaylorValue, TaylorValue]:
    """Joint recurrence  k s_k = sum i u_i c_{k-i},  k c_k = -sum i u_i s_{k-i}."""
    K = u.order
    s = [g.c_sin(u.coeffs[0])]
    c = [g.c_cos(u.coeffs[0])]
    for k in range(1, K + 1):
        s_terms = [g.c_scale(g.c_mul(u.coeff(i), c[k - i]), i / k) for i in range(1, k + 1)]
        c_terms = [g.c_scale(g.c_mul(u.coeff(i), s[k - i]), i / k) for i in range(1, k + 1)]
        sa = s_terms[0]
        ca = c_terms[0]
        for t in s_terms[1:]:
            sa = g.c_add(sa, t)
        for t in c_terms[1:]:
            ca = g.c_add(ca, t)
        s.append(sa)
        c.append(g.c_neg(ca))
    return TaylorValue(s), TaylorValue(c)


def t_sin(u: TaylorValue) -> TaylorValue:
    return _t_sincos(u)[0]


def t_cos(u: TaylorValue) -> TaylorValue:
    return _t_sincos(u)[1]


def t_affine(x: TaylorValue, w, b) -> TaylorValue:
    """Affine layer on a series: bias enters the zeroth coefficient only."""
    out = [g.c_affine(x.coeffs[0], w, b)]
    out += [g.c_linear(c, w) for c in x.coeffs[1:]]
    return TaylorValue(out)


def t_linear(x: TaylorValue, w) -> TaylorValue:
    return TaylorValue([g.c_linear(c, w) for c in x.coeffs])


def t_stack2(a, b):
    """Column-stack per-coordinate series into one input series."""
    ta, tb = _is_tv(a), _is_tv(b)
    if ta and tb:
        K = _order(a, b)
        return TaylorValue([g.c_stack2(a.coeff(j), b.coeff(j)) for j in range(K + 1)])
    if ta:
        out = [g.c_stack2(a.coeffs[0], b)]
        zb = np.zeros_like(np.asarray(g._val(b)))
        out += [g.c_stack2(c, zb) for c in a.coeffs[1:]]
        return TaylorValue(out)
    out = [g.c_stack2(a, b.coeffs[0])]
    za = np.zeros_like(np.asarray(g._val(a)))
    out += [g.c_stack2(za, c) for c in b.coeffs[1:]]
    return TaylorValue(out)


def t_dot(a, b):
    """Row-wise dot where exactly one side is a series."""
    if _is_tv(a) and _is_tv(b):
        K = _order(a, b)
        out = []
        for k in range(K + 1):
            terms = [g.c_dot(a.coeff(i), b.coeff(k - i)) for i in range(k + 1)
                     if i <= a.order and (k - i) <= b.order]
            acc = terms[0]
            for t in terms[1:]:
                acc = g.c_add(acc, t)
            out.append(acc)
        return TaylorValue(out)
    if _is_tv(b):
        return TaylorValue([g.c_dot(a, c) for c in b.coeffs])
    return TaylorValue([g.c_dot(c, b) for c in a.coeffs])


def taylor_eval(f: Callable, base_point: Sequence, direction: Sequence, order: int) -> TaylorValue:
    """Propagate a jet through ``f`` along one direction.

    ``f`` receives one :class:`TaylorValue` per coordinate, seeded with
    ``c_0 = base``, ``c_1 = direction`` and zeros above, and must be built
    from registered primitives.  The result's ``j!``-scaled coefficients
    are the directional derivatives of ``f`` at ``base_point``.
    """
    if not 0 <= order <= MAX_ORDER:
        raise DerivativeOrderError(f"taylor_eval supports orders 0..{MAX_ORDER}, got {order}")
    if len(base_point) != len(direction):
        raise ShapeError("base_point and direction must have equal length")
    args = []
    for b, d in zip(base_point, direction):
        b = np.asarray(b, dtype=np.float64)
        d = np.broadcast_to(np.asarray(d, dtype=np.float64), b.shape).copy()
        coeffs = [b, d] + [np.zeros_like(b) for _ in range(order - 1)]
        args.append(TaylorValue(coeffs[: order + 1]))
    out = f(*args)
    if not _is_tv(out):
        out = TaylorValue([out] + [np.zeros_like(np.asarray(g._val(out))) for _ in range(order)])
    return out
