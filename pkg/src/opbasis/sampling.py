"""Random input-function families for operator training.

Three families, each a deterministic function of (spec, seed):

* ``warped_se``: mean-zero Gaussian field on (0, 2 pi) with the squared-
  exponential kernel applied after the periodic warp z = sin^2(x/2), so
  draws are periodic by construction.  Sampled once on a fixed master
  grid via a jittered Cholesky factor and interpolated with a periodic
  cubic spline; every consumer (sensors, solver grids, quadrature nodes)
  sees the same underlying function.
* ``spectral_burgers``: random Fourier series on (0, 1) with mode
  standard deviations 25 ((2 pi k)^2 + 25)^-2, conjugate-symmetric and
  truncated at the sensor Nyquist frequency.
* ``kdv_trig``: c (-a sin x + b cos x) with a, b uniform on [0, 1) and
  c uniform on [-1, 1).
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError, FactorizationError

__all__ = [
    "GrfSpec",
    "InputFunction",
    "sensor_grid",
    "warped_se_kernel",
    "draw_function",
    "sample_function",
    "sample_warped_se",
    "sample_spectral_burgers",
    "sample_kdv_ic",
    "save_inputs",
    "load_inputs",
]

_FAMILIES = ("warped_se", "spectral_burgers", "kdv_trig")

JITTER_START = 1e-12
JITTER_CAP = 1e-6


@dataclass(frozen=True)
class GrfSpec:
    """Input-function family plus its sensor grid."""

    family: str
    m: int = 128
    x_max: float = 2.0 * np.pi
    length_scale: float = 0.5   # warped_se
    master_n: int = 512         # warped_se: master-grid interval count
    amplitude: float = 25.0     # spectral_burgers
    shift: float = 25.0         # spectral_burgers: 5^2

    def validate(self) -> None:
        if self.family not in _FAMILIES:
            raise ConfigError(f"unknown input family '{self.family}'; expected one of {_FAMILIES}")
        if self.m < 2:
            raise ConfigError("need at least two sensors")
        if self.x_max <= 0:
            raise ConfigError("x_max must be positive")
        if self.family == "warped_se":
            if self.length_scale <= 0:
                raise ConfigError("length_scale must be positive")
            if self.master_n < 4:
                raise ConfigError("master grid too coarse")

    @classmethod
    def warped(cls, m=128, length_scale=0.5, master_n=512):
        return cls("warped_se", m=m, x_max=2.0 * np.pi,
                   length_scale=length_scale, master_n=master_n)

    @classmethod
    def burgers_benchmark(cls, m=101):
        return cls("spectral_burgers", m=m, x_max=1.0)

    @classmethod
    def kdv_trig(cls, m=128):
        return cls("kdv_trig", m=m, x_max=2.0 * np.pi)

    def to_dict(self) -> dict:
        return {
            "family": self.family, "m": self.m, "x_max": self.x_max,
            "length_scale": self.length_scale, "master_n": self.master_n,
            "amplitude": self.amplitude, "shift": self.shift,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GrfSpec":
        return cls(
            family=str(d["family"]), m=int(d["m"]), x_max=float(d["x_max"]),
            length_scale=float(d.get("length_scale", 0.5)),
            master_n=int(d.get("master_n", 512)),
            amplitude=float(d.get("amplitude", 25.0)),
            shift=float(d.get("shift", 25.0)),
        )


def sensor_grid(spec: GrfSpec) -> np.ndarray:
    """Uniform sensors including both endpoints."""
    return np.linspace(0.0, spec.x_max, spec.m)


class InputFunction:
    """One drawn input function, evaluable at arbitrary points."""

    def __init__(self, family: str, x_max: float, evaluator, seed: int):
        self.family = family
        self.x_max = x_max
        self._eval = evaluator
        self.seed = seed

    def __call__(self, x) -> np.ndarray:
        return self._eval(np.asarray(x, dtype=np.float64))


def warped_se_kernel(x1, x2, length_scale: float = 0.5) -> np.ndarray:
    """exp(-(z1 - z2)^2 / (2 l^2)) with the periodic warp z = sin^2(x/2)."""
    z1 = np.sin(np.asarray(x1, dtype=np.float64) / 2.0) ** 2
    z2 = np.sin(np.asarray(x2, dtype=np.float64) / 2.0) ** 2
    return np.exp(-((z1 - z2) ** 2) / (2.0 * length_scale**2))


@functools.lru_cache(maxsize=32)
def _warped_factor(spec: GrfSpec) -> tuple[np.ndarray, np.ndarray]:
    """(master nodes, Cholesky factor) for a warped_se spec.

    Jitter starts at 1e-12 and grows tenfold up to 1e-6; the kernel
    matrix is rank-deficient by periodicity (z(0) = z(2 pi)), so some
    jitter is always needed.
    """
    nodes = np.linspace(0.0, spec.x_max, spec.master_n + 1)
    K = warped_se_kernel(nodes[:, None], nodes[None, :], spec.length_scale)
    jitter = JITTER_START
    while jitter <= JITTER_CAP * (1 + 1e-12):
        try:
            L = np.linalg.cholesky(K + jitter * np.eye(len(nodes)))
            return nodes, L
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise FactorizationError(
        f"covariance factorization failed up to jitter {JITTER_CAP:g}"
    )


def draw_function(spec: GrfSpec, seed: int) -> InputFunction:
    """Draw one input function; deterministic in (spec, seed)."""
    spec.validate()
    rng = np.random.default_rng(seed)
    if spec.family == "warped_se":
        nodes, L = _warped_factor(spec)
        vals = L @ rng.standard_normal(len(nodes))
        # enforce exact periodicity for the spline; the two endpoint values
        # already agree to the jitter scale
        vals = vals.copy()
        vals[-1] = vals[0]
        spline = CubicSpline(nodes, vals, bc_type="periodic")
        x_max = spec.x_max

        def evaluate(x):
            return spline(np.mod(x, x_max))

        return InputFunction("warped_se", x_max, evaluate, seed)

    if spec.family == "spectral_burgers":
        n_modes = (spec.m - 1) // 2  # sensor Nyquist truncation
        k = np.arange(n_modes + 1)
        s = spec.amplitude * ((2.0 * np.pi * k / spec.x_max) ** 2 + spec.shift) ** -2
        coeff = np.zeros(n_modes + 1, dtype=np.complex128)
        coeff[0] = s[0] * rng.standard_normal()
        for j in range(1, n_modes + 1):
            a, b = rng.standard_normal(2)
            coeff[j] = s[j] * (a + 1j * b) / np.sqrt(2.0)
        two_pi_over_L = 2.0 * np.pi / spec.x_max

        def evaluate(x):
            phases = np.multiply.outer(x, k[1:]) * two_pi_over_L
            u = np.full(np.shape(x), float(coeff[0].real))
            u = u + 2.0 * (np.cos(phases) @ coeff[1:].real - np.sin(phases) @ coeff[1:].imag)
            return u

        return InputFunction("spectral_burgers", spec.x_max, evaluate, seed)

    # kdv_trig
    a = rng.uniform(0.0, 1.0)
    b = rng.uniform(0.0, 1.0)
    c = rng.uniform(-1.0, 1.0)

    def evaluate(x):
        return c * (-a * np.sin(x) + b * np.cos(x))

    return InputFunction("kdv_trig", spec.x_max, evaluate, seed)


def _sample(spec: GrfSpec, seed: int, family: str) -> np.ndarray:
    if spec.family != family:
        raise ConfigError(f"spec family '{spec.family}' does not match sampler '{family}'")
    return draw_function(spec, seed)(sensor_grid(spec))


def sample_function(spec: GrfSpec, seed: int) -> np.ndarray:
    """Sensor values of one draw from whatever family ``spec`` names."""
    return draw_function(spec, seed)(sensor_grid(spec))


def sample_warped_se(spec: GrfSpec, seed: int) -> np.ndarray:
    """Sensor values of one warped squared-exponential draw."""
    return _sample(spec, seed, "warped_se")


def sample_spectral_burgers(spec: GrfSpec, seed: int) -> np.ndarray:
    """Sensor values of one spectral Burgers-benchmark draw."""
    return _sample(spec, seed, "spectral_burgers")


def sample_kdv_ic(spec: GrfSpec, seed: int) -> np.ndarray:
    """Sensor values of one random trigonometric initial condition."""
    return _sample(spec, seed, "kdv_trig")


def spectral_mode_std(spec: GrfSpec, k: int) -> float:
    """Standard deviation of complex mode k of the Burgers family."""
    return float(spec.amplitude * ((2.0 * np.pi * k / spec.x_max) ** 2 + spec.shift) ** -2)


# ---------- persistence ----------


def save_inputs(directory: str | Path, name: str, spec: GrfSpec, seeds: list[int],
                values: np.ndarray) -> tuple[Path, Path]:
    """Write one block of drawn functions as CSV plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f"{name}.csv"
    np.savetxt(csv_path, np.asarray(values, dtype=np.float64), fmt="%.17g", delimiter=",")
    manifest = {
        "kind": "input-functions",
        "name": name,
        "spec": spec.to_dict(),
        "seeds": [int(s) for s in seeds],
        "rows": int(np.asarray(values).shape[0]),
        "csv": csv_path.name,
    }
    man_path = directory / f"{name}.json"
    man_path.write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return csv_path, man_path


def load_inputs(man_path: str | Path) -> tuple[GrfSpec, list[int], np.ndarray]:
    man_path = Path(man_path)
    doc = json.loads(man_path.read_text())
    if doc.get("kind") != "input-functions":
        raise ConfigError(f"{man_path} is not an input-function manifest")
    spec = GrfSpec.from_dict(doc["spec"])
    values = np.loadtxt(man_path.parent / doc["csv"], delimiter=",", ndmin=2)
    return spec, [int(s) for s in doc["seeds"]], values
