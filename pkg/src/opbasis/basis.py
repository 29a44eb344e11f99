"""Orthonormal basis extraction from trunk snapshots.

A trained trunk frozen at one time slice yields a matrix of feature
columns tau_k(x_i) on quadrature nodes.  Scaling rows by sqrt(w_i) turns
the continuous L2 inner product into the Euclidean one, so a thin SVD of
B_ik = w_i^{1/2} tau_k(x_i) gives discretely orthonormal left vectors;
dividing the rows back by sqrt(w_i) produces functions phi_k with
<phi_j, phi_k> = delta_jk under the rule.  Singular values come out
nonincreasing and measure how much of the span each mode carries.

For downstream evolution each phi_k is re-expanded in orthonormal
shifted Legendre polynomials, which makes derivatives exact and
evaluation possible anywhere, not just at the nodes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial import legendre as npleg

from . import diffkit as dk
from .errors import ConfigError, ShapeError
from .networks import DeepOnetModel

__all__ = [
    "QuadratureRule",
    "gauss_rule",
    "periodic_rule",
    "trapezoid_rule",
    "Basis",
    "freeze_trunk",
    "extract_basis",
    "truncate",
    "retained_count",
    "inner_products",
    "LegendreExpansion",
    "legendre_project",
    "save_basis",
    "load_basis",
]

DEFAULT_CUTOFF = 1e-13
DEFAULT_DEGREE = 120


@dataclass
class QuadratureRule:
    """Nodes and weights on [0, x_max]."""

    x: np.ndarray
    w: np.ndarray
    x_max: float

    def integrate(self, values) -> np.ndarray:
        return np.tensordot(self.w, np.asarray(values), axes=(0, 0))


def gauss_rule(n: int, x_max: float) -> QuadratureRule:
    """Gauss-Legendre scaled to [0, x_max]; exact through degree 2n - 1."""
    z, wz = np.polynomial.legendre.leggauss(n)
    half = x_max / 2.0
    return QuadratureRule(x=half * (z + 1.0), w=half * wz, x_max=x_max)


def periodic_rule(n: int, x_max: float) -> QuadratureRule:
    """Equal weights on the endpoint-excluded grid; spectrally accurate
    for periodic integrands."""
    x = np.linspace(0.0, x_max, n, endpoint=False)
    return QuadratureRule(x=x, w=np.full(n, x_max / n), x_max=x_max)


def trapezoid_rule(n: int, x_max: float) -> QuadratureRule:
    """Classical trapezoid on n + 1 inclusive nodes."""
    x = np.linspace(0.0, x_max, n + 1)
    h = x_max / n
    w = np.full(n + 1, h)
    w[0] = w[-1] = h / 2.0
    return QuadratureRule(x=x, w=w, x_max=x_max)


@dataclass
class Basis:
    """Orthonormal functions on quadrature nodes, with their weights."""

    x: np.ndarray        # (M,)
    w: np.ndarray        # (M,)
    values: np.ndarray   # (M, r) function values phi_k(x_i)
    sigma: np.ndarray    # (r,) nonincreasing
    x_max: float

    @property
    def size(self) -> int:
        return self.values.shape[1]


def freeze_trunk(model: DeepOnetModel, rule: QuadratureRule,
                 t_frozen: float) -> np.ndarray:
    """Trunk features tau_k(x_i) at one time slice, as a raw matrix."""
    pts = np.stack([rule.x, np.full_like(rule.x, t_frozen)], axis=1)
    return np.asarray(dk.value_of(model.trunk_forward(pts)), dtype=np.float64)


def extract_basis(tau: np.ndarray, rule: QuadratureRule) -> Basis:
    """Weighted thin SVD of a feature matrix.

    Each output column is fixed to have its largest-magnitude entry
    positive, so the decomposition is reproducible across runs.
    """
    tau = np.asarray(tau, dtype=np.float64)
    if tau.ndim != 2:
        raise ShapeError(f"feature matrix must be 2-D, got shape {tau.shape}")
    if tau.shape[0] != rule.x.size:
        raise ShapeError(
            f"feature matrix has {tau.shape[0]} rows, rule has {rule.x.size} nodes"
        )
    root_w = np.sqrt(rule.w)
    q, s, _ = np.linalg.svd(root_w[:, None] * tau, full_matrices=False)
    phi = q / root_w[:, None]
    anchor = np.argmax(np.abs(phi), axis=0)
    signs = np.sign(phi[anchor, np.arange(phi.shape[1])])
    signs[signs == 0] = 1.0
    return Basis(x=rule.x, w=rule.w, values=phi * signs, sigma=s, x_max=rule.x_max)


def retained_count(sigma: np.ndarray, cutoff: float = DEFAULT_CUTOFF) -> int:
    """Number of singular values strictly above cutoff * sigma_max."""
    sigma = np.asarray(sigma)
    if sigma.size == 0:
        return 0
    return int(np.sum(sigma > cutoff * sigma[0]))


def truncate(basis: Basis, cutoff: float = DEFAULT_CUTOFF) -> Basis:
    """Drop modes at or below the relative cutoff."""
    r = retained_count(basis.sigma, cutoff)
    if r == 0:
        raise ConfigError(f"cutoff {cutoff:g} retained no basis functions")
    return Basis(x=basis.x, w=basis.w, values=basis.values[:, :r],
                 sigma=basis.sigma[:r], x_max=basis.x_max)


def inner_products(basis: Basis, f_values) -> np.ndarray:
    """<phi_k, f> for f given on the basis nodes."""
    f = np.asarray(f_values, dtype=np.float64)
    if f.shape[-1] != basis.x.size:
        raise ShapeError(f"f has {f.shape[-1]} values, basis has {basis.x.size} nodes")
    return (f * basis.w) @ basis.values


@dataclass
class LegendreExpansion:
    """Basis functions re-expanded in orthonormal shifted Legendre
    polynomials, with exact derivatives."""

    coef: np.ndarray   # (r, degree + 1), orthonormal-Legendre coefficients
    x_max: float

    @property
    def size(self) -> int:
        return self.coef.shape[0]

    @property
    def degree(self) -> int:
        return self.coef.shape[1] - 1

    def __call__(self, x, deriv: int = 0) -> np.ndarray:
        """Values (or an exact derivative) at arbitrary points, (B, r)."""
        if not 0 <= int(deriv) == deriv:
            raise ConfigError(f"derivative order must be a nonnegative integer, got {deriv}")
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        z = 2.0 * x / self.x_max - 1.0
        norms = np.sqrt((2.0 * np.arange(self.degree + 1) + 1.0) / self.x_max)
        a = (self.coef * norms).T   # standard-Legendre coefficients in z
        if deriv:
            a = npleg.legder(a, m=int(deriv), axis=0)
        vals = npleg.legval(z, a, tensor=True)    # (r, B)
        return vals.T * (2.0 / self.x_max) ** deriv


def legendre_project(basis: Basis, degree: int = DEFAULT_DEGREE) -> LegendreExpansion:
    """Project each basis function onto orthonormal shifted Legendre.

    The projection integrals use the basis's own nodes and weights, so
    the rule must resolve products of the basis with degree-``degree``
    polynomials (the Gauss rule used by the pipeline does).
    """
    if degree < 0:
        raise ConfigError("degree must be nonnegative")
    z = 2.0 * basis.x / basis.x_max - 1.0
    V = npleg.legvander(z, degree)
    norms = np.sqrt((2.0 * np.arange(degree + 1) + 1.0) / basis.x_max)
    coef = (basis.values * basis.w[:, None]).T @ (V * norms)
    return LegendreExpansion(coef=coef, x_max=basis.x_max)


def save_basis(directory: str | Path, name: str, basis: Basis,
               expansion: LegendreExpansion | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / f"{name}_values.csv", basis.values, fmt="%.17g", delimiter=",")
    np.savetxt(directory / f"{name}_sigma.csv", basis.sigma, fmt="%.17g", delimiter=",")
    np.savetxt(directory / f"{name}_nodes.csv",
               np.stack([basis.x, basis.w], axis=1), fmt="%.17g", delimiter=",")
    manifest = {
        "kind": "basis",
        "name": name,
        "size": int(basis.size),
        "x_max": float(basis.x_max),
        "files": {
            "values": f"{name}_values.csv",
            "sigma": f"{name}_sigma.csv",
            "nodes": f"{name}_nodes.csv",
        },
    }
    if expansion is not None:
        np.savetxt(directory / f"{name}_legendre.csv", expansion.coef,
                   fmt="%.17g", delimiter=",")
        manifest["files"]["legendre"] = f"{name}_legendre.csv"
        manifest["degree"] = int(expansion.degree)
    man_path = directory / f"{name}.json"
    man_path.write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return man_path


def load_basis(man_path: str | Path) -> tuple[Basis, LegendreExpansion | None]:
    man_path = Path(man_path)
    doc = json.loads(man_path.read_text())
    if doc.get("kind") != "basis":
        raise ConfigError(f"{man_path} is not a basis manifest")
    d = man_path.parent
    files = doc["files"]
    nodes = np.loadtxt(d / files["nodes"], delimiter=",", ndmin=2)
    basis = Basis(
        x=nodes[:, 0], w=nodes[:, 1],
        values=np.loadtxt(d / files["values"], delimiter=",", ndmin=2),
        sigma=np.atleast_1d(np.loadtxt(d / files["sigma"], delimiter=",")),
        x_max=float(doc["x_max"]),
    )
    expansion = None
    if "legendre" in files:
        expansion = LegendreExpansion(
            coef=np.loadtxt(d / files["legendre"], delimiter=",", ndmin=2),
            x_max=basis.x_max,
        )
    return basis, expansion
