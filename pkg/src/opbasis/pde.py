"""PDE definitions: interior residuals and periodic boundary gaps.

Three evolution equations on a periodic interval (0, x_max), all solved
for t in (0, t_max):

* advection-diffusion   s_t + alpha s_x - nu s_xx = 0
* viscous Burgers       s_t + s s_x - nu s_xx = 0
* Korteweg-de Vries     s_t + s s_x + delta^2 s_xxx = 0

A *field* here is any callable ``field(x, t)`` built from registered
primitives that accepts (B, 1) coordinate columns, either raw or as
Taylor jets.  The residual and boundary operators are written against
that interface, so they apply equally to an operator-network prediction
and to a closed-form expression, which is how the residual algebra gets
checked independently of any network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffkit as dk
from .diffkit import TaylorValue
from .errors import ConfigError, ShapeError
from .networks import DeepOnetModel, mlp_forward

__all__ = [
    "PdeSpec",
    "make_deeponet_field",
    "field_jets",
    "residual_of_field",
    "residual",
    "boundary_gaps_of_field",
    "boundary_mismatch",
]

_KINDS = ("advection_diffusion", "burgers", "kdv")


@dataclass(frozen=True)
class PdeSpec:
    """One equation instance with its domain."""

    kind: str
    alpha: float = 0.0
    nu: float = 0.0
    delta: float = 0.0
    x_max: float = 2.0 * np.pi
    t_max: float = 1.0

    def validate(self) -> None:
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown PDE kind '{self.kind}'; expected one of {_KINDS}")
        if self.x_max <= 0 or self.t_max <= 0:
            raise ConfigError("domain extents must be positive")
        if self.kind in ("advection_diffusion", "burgers") and self.nu < 0:
            raise ConfigError("viscosity must be nonnegative")

    @classmethod
    def advection_diffusion(cls, alpha=4.0, nu=0.01, x_max=2.0 * np.pi, t_max=1.0):
        return cls("advection_diffusion", alpha=alpha, nu=nu, x_max=x_max, t_max=t_max)

    @classmethod
    def burgers(cls, nu=0.1, x_max=2.0 * np.pi, t_max=1.0):
        return cls("burgers", nu=nu, x_max=x_max, t_max=t_max)

    @classmethod
    def kdv(cls, delta=0.1, x_max=2.0 * np.pi, t_max=1.0):
        return cls("kdv", delta=delta, x_max=x_max, t_max=t_max)

    @property
    def spatial_order(self) -> int:
        """Highest spatial derivative in the interior operator."""
        return 3 if self.kind == "kdv" else 2

    @property
    def bc_gap_orders(self) -> tuple[int, ...]:
        """Derivative orders matched across the periodic boundary."""
        return (0, 1, 2) if self.kind == "kdv" else (0, 1)

    @property
    def tag(self) -> str:
        if self.kind == "advection_diffusion":
            phys = f"alpha={self.alpha:g}:nu={self.nu:g}"
        elif self.kind == "burgers":
            phys = f"nu={self.nu:g}"
        else:
            phys = f"delta={self.delta:g}"
        return f"{self.kind}:{phys}:x_max={self.x_max:g}"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "alpha": self.alpha,
            "nu": self.nu,
            "delta": self.delta,
            "x_max": self.x_max,
            "t_max": self.t_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PdeSpec":
        return cls(
            kind=str(d["kind"]),
            alpha=float(d.get("alpha", 0.0)),
            nu=float(d.get("nu", 0.0)),
            delta=float(d.get("delta", 0.0)),
            x_max=float(d.get("x_max", 2.0 * np.pi)),
            t_max=float(d.get("t_max", 1.0)),
        )


def make_deeponet_field(model: DeepOnetModel, branch_out, weights: dict | None = None):
    """Field closure over fixed branch features.

    ``branch_out`` is the (B, w) branch output aligned with whatever
    point batch the field will be called on; it may be raw or a Node.
    """
    w = weights if weights is not None else model.params.unflatten()

    def field(x, t):
        y = dk.stack2(x, t)
        tr = mlp_forward(model.trunk, w, y, prefix="trunk.")
        return dk.dot(branch_out, tr)

    return field


def _col(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[1] != 1:
        raise ShapeError(f"coordinates must be (B,) or (B, 1), got {a.shape}")
    return a


def field_jets(field, x, t, x_order: int):
    """x-jet and first t-derivative of a field at a point batch.

    Returns ``(jet_x, s_t)`` where ``jet_x`` is the TaylorValue in the x
    direction truncated at ``x_order`` and ``s_t`` the first coefficient
    of the t-direction jet.
    """
    x = _col(x)
    t = _col(t)
    jet_x = dk.taylor_eval(field, [x, t], [np.ones_like(x), np.zeros_like(t)], order=x_order)
    jet_t = dk.taylor_eval(field, [x, t], [np.zeros_like(x), np.ones_like(t)], order=1)
    return jet_x, jet_t.derivative(1)


def residual_of_field(field, points: np.ndarray, spec: PdeSpec):
    """Interior operator applied to a field at points (B, 2) -> (B,) values."""
    spec.validate()
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ShapeError(f"points must be (B, 2), got {points.shape}")
    jet_x, s_t = field_jets(field, points[:, 0], points[:, 1], spec.spatial_order)
    s = jet_x.coeff(0)
    s_x = jet_x.derivative(1)
    s_xx = jet_x.derivative(2)
    if spec.kind == "advection_diffusion":
        flux = dk.sub(dk.scale(s_x, spec.alpha), dk.scale(s_xx, spec.nu))
    elif spec.kind == "burgers":
        flux = dk.sub(dk.mul(s, s_x), dk.scale(s_xx, spec.nu))
    else:
        s_xxx = jet_x.derivative(3)
        flux = dk.add(dk.mul(s, s_x), dk.scale(s_xxx, spec.delta**2))
    return dk.add(s_t, flux)


def residual(model: DeepOnetModel, u: np.ndarray, points: np.ndarray, spec: PdeSpec) -> np.ndarray:
    """Residual of a model prediction; ``u`` as in :func:`deeponet_eval`."""
    points = np.asarray(points, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    weights = model.params.unflatten()
    if u.ndim == 1:
        b = model.branch_forward(u[None, :], weights)
        branch_out = np.broadcast_to(b[0], (points.shape[0], model.width)).copy()
    else:
        branch_out = model.branch_forward(u, weights)
    field = make_deeponet_field(model, branch_out, weights)
    return np.asarray(dk.value_of(residual_of_field(field, points, spec))).ravel()


def boundary_gaps_of_field(field, t_values: np.ndarray, spec: PdeSpec,
                           orders: tuple[int, ...] | None = None):
    """Periodic mismatches d^j s(0, t) - d^j s(x_max, t) per requested order."""
    spec.validate()
    if orders is None:
        orders = spec.bc_gap_orders
    t = _col(t_values)
    x0 = np.zeros_like(t)
    x1 = np.full_like(t, spec.x_max)
    max_order = max(orders)
    jet0 = dk.taylor_eval(field, [x0, t], [np.ones_like(t), np.zeros_like(t)], order=max_order)
    jet1 = dk.taylor_eval(field, [x1, t], [np.ones_like(t), np.zeros_like(t)], order=max_order)
    return tuple(dk.sub(jet0.derivative(j), jet1.derivative(j)) for j in orders)


def boundary_mismatch(model: DeepOnetModel, u: np.ndarray, t_values: np.ndarray,
                      spec: PdeSpec, orders: tuple[int, ...] | None = None):
    """Boundary gaps of a model prediction as raw arrays, one per order."""
    t_values = np.asarray(t_values, dtype=np.float64).ravel()
    u = np.asarray(u, dtype=np.float64)
    weights = model.params.unflatten()
    if u.ndim == 1:
        b = model.branch_forward(u[None, :], weights)
        branch_out = np.broadcast_to(b[0], (t_values.shape[0], model.width)).copy()
    else:
        branch_out = model.branch_forward(u, weights)
    field = make_deeponet_field(model, branch_out, weights)
    gaps = boundary_gaps_of_field(field, t_values, spec, orders)
    return tuple(np.asarray(dk.value_of(g)).ravel() for g in gaps)
