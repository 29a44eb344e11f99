"""Galerkin evolution of PDE dynamics in an extracted basis.

The solution is written as s(x, t) = sum_k a_k(t) phi_k(x) with phi_k
given by a Legendre re-expansion, so spatial derivatives are exact.
Testing the equation against each phi_k under a quadrature rule turns
the PDE into the coefficient system

    a_k' = -<phi_k, N[sum_i a_i phi_i]>,    a_k(0) = <phi_k, u>,

where N collects every term except s_t.  The system is integrated with
classical RK4.

Basis functions recovered from network features need not satisfy the
periodic boundary conditions individually, and coefficient directions
whose reconstruction has endpoint gaps feed unphysical growth through
the boundary terms of the projected operator.  The dynamics are
therefore restricted to the subspace of coefficients whose field is
periodic in value and in derivatives up to one below the equation's
spatial order; on that subspace the advective part is skew and the
diffusive part negative semidefinite, so the evolution is stable.  For
a basis that is already periodic the restriction is the identity and
the plain projected system is recovered.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import LegendreExpansion, QuadratureRule, gauss_rule
from .errors import ConfigError, ShapeError, SolverBlowupError
from .pde import PdeSpec

__all__ = [
    "GalerkinSystem",
    "CoefficientPath",
    "init_coeffs",
    "evolve",
    "reconstruct",
    "save_coeffs",
    "load_coeffs",
]

BLOWUP_LIMIT = 1e8
DEFAULT_NODES = 512
GAP_TOL = 1e-6


def _compat_projector(expansion: LegendreExpansion, x_max: float,
                      order: int) -> np.ndarray:
    """Orthogonal projector onto coefficients with periodic reconstruction.

    Rows of the constraint matrix are the endpoint gaps of each basis
    function and its derivatives up to ``order - 1``, each row scaled by
    the magnitude of the endpoint values at that derivative order.  Gap
    directions with scaled singular value below GAP_TOL are treated as
    already periodic: endpoint evaluation of a high-degree expansion
    carries roundoff well below that level, while genuinely aperiodic
    modes sit orders of magnitude above it, so an exactly periodic basis
    yields the identity.
    """
    ends = np.array([0.0, x_max])
    rows = []
    for d in range(order):
        vals = expansion(ends, d)
        scale = max(1.0, float(np.abs(vals).max()))
        rows.append((vals[1] - vals[0]) / scale)
    _, sv, vt = np.linalg.svd(np.stack(rows), full_matrices=True)
    rank = int(np.sum(sv > GAP_TOL))
    z = vt[rank:]
    return z.T @ z


@dataclass
class GalerkinSystem:
    """Precomputed node matrices for one (basis, equation) pair."""

    expansion: LegendreExpansion
    spec: PdeSpec
    rule: QuadratureRule
    phi: np.ndarray      # (M, r)
    phi_x: np.ndarray
    phi_xx: np.ndarray | None
    phi_xxx: np.ndarray | None
    compat: np.ndarray   # (r, r) periodic-compatibility projector

    @classmethod
    def build(cls, expansion: LegendreExpansion, spec: PdeSpec,
              rule: QuadratureRule | None = None) -> "GalerkinSystem":
        spec.validate()
        if rule is None:
            rule = gauss_rule(DEFAULT_NODES, spec.x_max)
        if abs(rule.x_max - spec.x_max) > 1e-12 or abs(expansion.x_max - spec.x_max) > 1e-12:
            raise ConfigError("basis, rule, and equation must share the domain length")
        x = rule.x
        need_xx = spec.kind in ("advection_diffusion", "burgers")
        spatial_order = 3 if spec.kind == "kdv" else 2
        return cls(
            expansion=expansion, spec=spec, rule=rule,
            phi=expansion(x, 0), phi_x=expansion(x, 1),
            phi_xx=expansion(x, 2) if need_xx else None,
            phi_xxx=expansion(x, 3) if spec.kind == "kdv" else None,
            compat=_compat_projector(expansion, spec.x_max, spatial_order),
        )

    @property
    def size(self) -> int:
        return self.expansion.size

    def rhs(self, a: np.ndarray) -> np.ndarray:
        """-<phi_k, N[s]> for the compatible part of the coefficients.

        Both the field fed to N and the projected result pass through
        the compatibility projector; the incompatible component of a
        state is therefore inert rather than amplified.
        """
        a = self.compat @ a
        s_x = self.phi_x @ a
        if self.spec.kind == "advection_diffusion":
            interior = self.spec.alpha * s_x - self.spec.nu * (self.phi_xx @ a)
        elif self.spec.kind == "burgers":
            interior = (self.phi @ a) * s_x - self.spec.nu * (self.phi_xx @ a)
        else:
            interior = (self.phi @ a) * s_x + self.spec.delta**2 * (self.phi_xxx @ a)
        return self.compat @ (-(interior * self.rule.w) @ self.phi)


@dataclass
class CoefficientPath:
    """Stored coefficient snapshots of one Galerkin evolution."""

    t: np.ndarray   # (S,)
    a: np.ndarray   # (S, r)


def init_coeffs(system: GalerkinSystem, u) -> np.ndarray:
    """Project an initial condition onto the basis: a_k(0) = <phi_k, u>."""
    vals = np.asarray(u(system.rule.x) if callable(u) else u, dtype=np.float64)
    if vals.shape != system.rule.x.shape:
        raise ShapeError(f"initial values have shape {vals.shape}, "
                         f"rule has {system.rule.x.shape}")
    return (vals * system.rule.w) @ system.phi


def evolve(system: GalerkinSystem, a0: np.ndarray, n_steps: int = 2000,
           store_stride: int | None = None) -> CoefficientPath:
    """Classical RK4 on the coefficient system over (0, t_max)."""
    a = np.asarray(a0, dtype=np.float64).copy()
    if a.shape != (system.size,):
        raise ShapeError(f"expected {system.size} coefficients, got shape {a.shape}")
    if store_stride is None:
        store_stride = max(1, n_steps // 100)
    if n_steps % store_stride != 0:
        raise ConfigError(f"store_stride {store_stride} must divide n_steps {n_steps}")
    dt = system.spec.t_max / n_steps
    stored = [a.copy()]
    for step in range(1, n_steps + 1):
        k1 = system.rhs(a)
        k2 = system.rhs(a + 0.5 * dt * k1)
        k3 = system.rhs(a + 0.5 * dt * k2)
        k4 = system.rhs(a + dt * k3)
        a = a + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if step % store_stride == 0:
            if not np.all(np.isfinite(a)) or np.max(np.abs(a)) > BLOWUP_LIMIT:
                raise SolverBlowupError(
                    f"coefficients blew up at step {step} (t = {step * dt:g})",
                    step=step, time=step * dt,
                )
            stored.append(a.copy())
    times = np.arange(0, n_steps + 1, store_stride) * dt
    return CoefficientPath(t=times, a=np.stack(stored))


def reconstruct(expansion: LegendreExpansion, a: np.ndarray, x) -> np.ndarray:
    """Field values sum_k a_k phi_k(x); rows follow the rows of ``a``."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    return a @ expansion(x, 0).T


def save_coeffs(directory: str | Path, name: str, spec: PdeSpec,
                path: CoefficientPath) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / f"{name}_coeffs.csv", path.a, fmt="%.17g", delimiter=",")
    manifest = {
        "kind": "coefficient-path",
        "name": name,
        "pde": spec.to_dict(),
        "n_stored": int(path.t.size),
        "t_final": float(path.t[-1]),
        "size": int(path.a.shape[1]),
        "csv": f"{name}_coeffs.csv",
    }
    man_path = directory / f"{name}.json"
    man_path.write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return man_path


def load_coeffs(man_path: str | Path) -> tuple[PdeSpec, CoefficientPath]:
    man_path = Path(man_path)
    doc = json.loads(man_path.read_text())
    if doc.get("kind") != "coefficient-path":
        raise ConfigError(f"{man_path} is not a coefficient-path manifest")
    a = np.loadtxt(man_path.parent / doc["csv"], delimiter=",", ndmin=2)
    t = np.linspace(0.0, doc["t_final"], doc["n_stored"])
    return PdeSpec.from_dict(doc["pde"]), CoefficientPath(t=t, a=a)
