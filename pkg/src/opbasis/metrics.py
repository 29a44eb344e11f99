"""Error measures for evaluating predicted space-time fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

__all__ = [
    "relative_l2",
    "error_curve",
    "average_error",
    "aggregate",
    "ErrorReport",
]


def relative_l2(pred, ref, axis: int = -1) -> np.ndarray:
    """||pred - ref|| / ||ref|| along ``axis``.

    A zero reference with a nonzero prediction maps to inf; two zeros
    map to 0.
    """
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise ShapeError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    num = np.linalg.norm(pred - ref, axis=axis)
    den = np.linalg.norm(ref, axis=axis)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0),
                       np.where(num > 0, np.inf, 0.0))
    return out


def error_curve(pred_u: np.ndarray, ref_u: np.ndarray) -> np.ndarray:
    """Spatial relative error at each stored time, rows are snapshots."""
    pred_u = np.asarray(pred_u)
    if pred_u.ndim != 2:
        raise ShapeError(f"expected (S, M) snapshots, got shape {pred_u.shape}")
    return relative_l2(pred_u, ref_u, axis=1)


def average_error(curve: np.ndarray, t: np.ndarray) -> float:
    """Time average (1/T) integral of E(t) dt by the trapezoid rule."""
    curve = np.asarray(curve, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if curve.shape != t.shape:
        raise ShapeError(f"curve and times differ: {curve.shape} vs {t.shape}")
    span = t[-1] - t[0]
    if span <= 0:
        raise ShapeError("times must span a positive interval")
    return float(np.trapezoid(curve, t) / span)


def aggregate(errors) -> tuple[float, float]:
    """Mean and population standard deviation over test functions."""
    e = np.asarray(errors, dtype=np.float64)
    return float(e.mean()), float(e.std(ddof=0))


@dataclass
class ErrorReport:
    """Per-function time-averaged errors plus their aggregate."""

    per_function: np.ndarray
    mean: float
    std: float

    @classmethod
    def from_errors(cls, errors) -> "ErrorReport":
        e = np.asarray(errors, dtype=np.float64)
        m, s = aggregate(e)
        return cls(per_function=e, mean=m, std=s)

    def as_percent(self) -> str:
        return f"{100.0 * self.mean:.2f}% +/- {100.0 * self.std:.2f}%"
