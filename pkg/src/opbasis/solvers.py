"""Reference solvers on a periodic Fourier grid.

Advection-diffusion is diagonal in Fourier space and is evolved exactly,
mode by mode.  Burgers and Korteweg-de Vries use an integrating-factor
classical RK4: the stiff linear part is absorbed into exponential
factors, the quadratic term is evaluated pseudo-spectrally with 2/3-rule
dealiasing.  All solvers march the same endpoint-excluded grid
x_j = j x_max / M and store every ``store_stride``-th step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, SolverBlowupError
from .pde import PdeSpec

__all__ = [
    "SolutionField",
    "solver_grid",
    "default_steps",
    "solve_reference",
    "solve_advdiff",
    "solve_burgers",
    "solve_kdv",
    "save_solution",
    "load_solution",
]

BLOWUP_LIMIT = 1e8


@dataclass
class SolutionField:
    """Stored snapshots of one reference solve."""

    x: np.ndarray   # (M,) endpoint-excluded grid
    t: np.ndarray   # (S,) stored times, t[0] = 0
    u: np.ndarray   # (S, M)
    kind: str

    def at_time(self, i: int) -> np.ndarray:
        return self.u[i]


def solver_grid(x_max: float, m: int) -> np.ndarray:
    return np.linspace(0.0, x_max, m, endpoint=False)


def default_steps(spec: PdeSpec) -> int:
    """Step counts sized to each equation's stiffness."""
    if spec.kind == "kdv":
        return 10000
    if spec.kind == "burgers" and spec.nu <= 1e-3:
        return 10000
    return 2000


def _stride(n_steps: int, store_stride: int | None) -> int:
    if store_stride is None:
        store_stride = max(1, n_steps // 100)
    if n_steps % store_stride != 0:
        raise ConfigError(f"store_stride {store_stride} must divide n_steps {n_steps}")
    return store_stride


def _wavenumbers(m: int, x_max: float) -> np.ndarray:
    return 2.0 * np.pi * np.fft.fftfreq(m, d=x_max / m)


def _initial_values(u0, x: np.ndarray) -> np.ndarray:
    vals = np.asarray(u0(x) if callable(u0) else u0, dtype=np.float64)
    if vals.shape != x.shape:
        raise ConfigError(f"initial condition has shape {vals.shape}, grid {x.shape}")
    return vals


def solve_advdiff(spec: PdeSpec, u0, m: int = 256, n_steps: int = 2000,
                  store_stride: int | None = None) -> SolutionField:
    """Exact modal evolution of s_t + alpha s_x - nu s_xx = 0."""
    spec.validate()
    if spec.kind != "advection_diffusion":
        raise ConfigError(f"solve_advdiff got kind '{spec.kind}'")
    stride = _stride(n_steps, store_stride)
    x = solver_grid(spec.x_max, m)
    k = _wavenumbers(m, spec.x_max)
    uhat0 = np.fft.fft(_initial_values(u0, x))
    times = np.arange(0, n_steps + 1, stride) * (spec.t_max / n_steps)
    decay = np.exp(np.outer(times, -1j * spec.alpha * k - spec.nu * k**2))
    u = np.real(np.fft.ifft(decay * uhat0[None, :], axis=1))
    return SolutionField(x=x, t=times, u=u, kind=spec.kind)


def _if_rk4(spec: PdeSpec, u0, m: int, n_steps: int, store_stride: int | None,
            lin: np.ndarray) -> SolutionField:
    """Integrating-factor RK4 for u_t = L u - u u_x with L diagonal."""
    stride = _stride(n_steps, store_stride)
    x = solver_grid(spec.x_max, m)
    k = _wavenumbers(m, spec.x_max)
    dt = spec.t_max / n_steps
    # 2/3-rule mask; state and nonlinear term both stay in the retained band
    mask = np.abs(k) <= (2.0 / 3.0) * np.max(np.abs(k))
    e_half = np.exp(lin * dt / 2.0)
    e_full = e_half * e_half

    def nonlin(vhat):
        v = np.real(np.fft.ifft(vhat))
        return mask * (-0.5j * k * np.fft.fft(v * v))

    vhat = mask * np.fft.fft(_initial_values(u0, x))
    stored = [np.real(np.fft.ifft(vhat))]
    for step in range(1, n_steps + 1):
        a = dt * nonlin(vhat)
        b = dt * nonlin(e_half * (vhat + a / 2.0))
        c = dt * nonlin(e_half * vhat + b / 2.0)
        d = dt * nonlin(e_full * vhat + e_half * c)
        vhat = e_full * vhat + (e_full * a + 2.0 * e_half * (b + c) + d) / 6.0
        if step % stride == 0:
            u = np.real(np.fft.ifft(vhat))
            if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > BLOWUP_LIMIT:
                raise SolverBlowupError(
                    f"field blew up at step {step} (t = {step * dt:g})",
                    step=step, time=step * dt,
                )
            stored.append(u)
    times = np.arange(0, n_steps + 1, stride) * dt
    return SolutionField(x=x, t=times, u=np.stack(stored), kind=spec.kind)


def solve_burgers(spec: PdeSpec, u0, m: int = 256, n_steps: int | None = None,
                  store_stride: int | None = None) -> SolutionField:
    """Pseudo-spectral solve of s_t + s s_x - nu s_xx = 0."""
    spec.validate()
    if spec.kind != "burgers":
        raise ConfigError(f"solve_burgers got kind '{spec.kind}'")
    if n_steps is None:
        n_steps = default_steps(spec)
    k = _wavenumbers(m, spec.x_max)
    return _if_rk4(spec, u0, m, n_steps, store_stride, lin=-spec.nu * k**2)


def solve_kdv(spec: PdeSpec, u0, m: int = 256, n_steps: int | None = None,
              store_stride: int | None = None) -> SolutionField:
    """Pseudo-spectral solve of s_t + s s_x + delta^2 s_xxx = 0."""
    spec.validate()
    if spec.kind != "kdv":
        raise ConfigError(f"solve_kdv got kind '{spec.kind}'")
    if n_steps is None:
        n_steps = default_steps(spec)
    k = _wavenumbers(m, spec.x_max)
    return _if_rk4(spec, u0, m, n_steps, store_stride, lin=1j * spec.delta**2 * k**3)


def solve_reference(spec: PdeSpec, u0, m: int = 256, n_steps: int | None = None,
                    store_stride: int | None = None) -> SolutionField:
    """Dispatch on the equation kind."""
    if spec.kind == "advection_diffusion":
        return solve_advdiff(spec, u0, m, n_steps or default_steps(spec), store_stride)
    if spec.kind == "burgers":
        return solve_burgers(spec, u0, m, n_steps, store_stride)
    if spec.kind == "kdv":
        return solve_kdv(spec, u0, m, n_steps, store_stride)
    raise ConfigError(f"unknown PDE kind '{spec.kind}'")


def save_solution(directory: str | Path, name: str, spec: PdeSpec,
                  field: SolutionField) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f"{name}.csv"
    np.savetxt(csv_path, field.u, fmt="%.17g", delimiter=",")
    manifest = {
        "kind": "reference-solution",
        "name": name,
        "pde": spec.to_dict(),
        "m": int(field.x.size),
        "n_stored": int(field.t.size),
        "t_final": float(field.t[-1]),
        "csv": csv_path.name,
    }
    man_path = directory / f"{name}.json"
    man_path.write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return csv_path, man_path


def load_solution(man_path: str | Path) -> tuple[PdeSpec, SolutionField]:
    man_path = Path(man_path)
    doc = json.loads(man_path.read_text())
    if doc.get("kind") != "reference-solution":
        raise ConfigError(f"{man_path} is not a reference-solution manifest")
    spec = PdeSpec.from_dict(doc["pde"])
    u = np.loadtxt(man_path.parent / doc["csv"], delimiter=",", ndmin=2)
    x = solver_grid(spec.x_max, doc["m"])
    t = np.linspace(0.0, doc["t_final"], doc["n_stored"])
    return spec, SolutionField(x=x, t=t, u=u, kind=spec.kind)
