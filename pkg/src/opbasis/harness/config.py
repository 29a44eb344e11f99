"""Experiment configuration and named presets.

One ExperimentConfig bundles everything a pipeline run needs: the
equation, the input-function family, both network halves, optimizer
settings, collocation pool sizes, and the basis and evolution options.
Configs are plain JSON on disk and hash to a stable digest, so every
artifact can state exactly which settings produced it.

Desk presets shrink the full-scale settings to something a laptop
finishes in minutes; the shrunk fields are recorded next to their
full-scale values so manifests show the scaling explicitly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..errors import ConfigError
from ..networks import MlpSpec
from ..pde import PdeSpec
from ..sampling import GrfSpec
from ..training import TrainConfig

__all__ = [
    "ExperimentConfig",
    "PRESETS",
    "config_hash",
    "load_config",
    "make_preset",
    "save_config",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one pipeline run."""

    name: str
    pde: PdeSpec
    grf: GrfSpec
    branch: MlpSpec
    trunk: MlpSpec
    train: TrainConfig = field(default_factory=TrainConfig)
    n_train: int = 100          # input functions in the training set
    n_test: int = 10            # held-out functions for evaluation
    n_ic: int = 32              # per-function collocation pool sizes
    n_bc: int = 32
    n_interior: int = 32
    seed: int = 0               # master seed for sampling and pools
    checkpoint: str | None = None   # source parameters for transfer init
    freeze_time: float = 0.0    # trunk evaluation time for basis extraction
    quad_nodes: int = 512       # Gauss nodes for basis quadrature
    legendre_degree: int = 120  # polynomial reconstruction degree
    cutoff: float = 1e-13       # relative singular-value cutoff
    evolve_steps: int = 2000    # RK4 steps for coefficient evolution
    eval_m: int = 256           # reference-solve spatial resolution
    eval_steps: int | None = None   # reference-solve steps (None: solver default)
    scaling: dict = field(default_factory=dict)  # {field: [this run, full scale]}

    def validate(self) -> None:
        if not self.name or "/" in self.name or self.name != self.name.strip():
            raise ConfigError(f"config name {self.name!r} must be a plain token")
        self.pde.validate()
        self.grf.validate()
        self.branch.validate()
        self.trunk.validate()
        self.train.validate()
        if abs(self.pde.x_max - self.grf.x_max) > 1e-12:
            raise ConfigError("equation and input family must share the spatial domain")
        if self.branch.in_width != self.grf.m:
            raise ConfigError(
                f"branch reads {self.branch.in_width} sensors but the input "
                f"family provides {self.grf.m}"
            )
        if self.trunk.in_width != 2:
            raise ConfigError("trunk input must be (x, t)")
        if self.branch.out_width != self.trunk.out_width:
            raise ConfigError("branch and trunk must share the latent width")
        counts = (self.n_train, self.n_test, self.n_ic, self.n_bc, self.n_interior)
        if any(int(c) < 1 for c in counts):
            raise ConfigError(f"function and pool counts must be >= 1, got {counts}")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if not 0.0 <= self.freeze_time <= self.pde.t_max:
            raise ConfigError(
                f"freeze time {self.freeze_time} outside [0, {self.pde.t_max}]"
            )
        if not 0.0 < self.cutoff < 1.0:
            raise ConfigError(f"cutoff must lie in (0, 1), got {self.cutoff}")
        if self.quad_nodes < self.legendre_degree + 1:
            raise ConfigError(
                "quadrature must carry at least degree + 1 nodes to resolve "
                "the polynomial reconstruction"
            )
        if self.legendre_degree < 1 or self.evolve_steps < 1 or self.eval_m < 4:
            raise ConfigError("degree, evolution steps, and eval resolution too small")
        if self.eval_steps is not None and self.eval_steps < 1:
            raise ConfigError("eval_steps must be None or >= 1")

    @property
    def width(self) -> int:
        return self.branch.out_width

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pde": self.pde.to_dict(),
            "grf": self.grf.to_dict(),
            "branch": self.branch.to_dict(),
            "trunk": self.trunk.to_dict(),
            "train": dataclasses.asdict(self.train),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "n_ic": self.n_ic,
            "n_bc": self.n_bc,
            "n_interior": self.n_interior,
            "seed": self.seed,
            "checkpoint": self.checkpoint,
            "freeze_time": self.freeze_time,
            "quad_nodes": self.quad_nodes,
            "legendre_degree": self.legendre_degree,
            "cutoff": self.cutoff,
            "evolve_steps": self.evolve_steps,
            "eval_m": self.eval_m,
            "eval_steps": self.eval_steps,
            "scaling": dict(self.scaling),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config document must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        missing = {"name", "pde", "grf", "branch", "trunk"} - set(d)
        if missing:
            raise ConfigError(f"config is missing required fields: {sorted(missing)}")
        try:
            train_doc = d.get("train", {})
            allowed = {f.name for f in dataclasses.fields(TrainConfig)}
            bad = set(train_doc) - allowed
            if bad:
                raise ConfigError(f"unknown training fields: {sorted(bad)}")
            eval_steps = d.get("eval_steps")
            cfg = cls(
                name=str(d["name"]),
                pde=PdeSpec.from_dict(d["pde"]),
                grf=GrfSpec.from_dict(d["grf"]),
                branch=MlpSpec.from_dict(d["branch"]),
                trunk=MlpSpec.from_dict(d["trunk"]),
                train=TrainConfig(**train_doc),
                n_train=int(d.get("n_train", 100)),
                n_test=int(d.get("n_test", 10)),
                n_ic=int(d.get("n_ic", 32)),
                n_bc=int(d.get("n_bc", 32)),
                n_interior=int(d.get("n_interior", 32)),
                seed=int(d.get("seed", 0)),
                checkpoint=d.get("checkpoint"),
                freeze_time=float(d.get("freeze_time", 0.0)),
                quad_nodes=int(d.get("quad_nodes", 512)),
                legendre_degree=int(d.get("legendre_degree", 120)),
                cutoff=float(d.get("cutoff", 1e-13)),
                evolve_steps=int(d.get("evolve_steps", 2000)),
                eval_m=int(d.get("eval_m", 256)),
                eval_steps=None if eval_steps is None else int(eval_steps),
                scaling=dict(d.get("scaling", {})),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"malformed config: {e}") from e
        cfg.validate()
        return cfg

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with both the sampling and optimization seeds replaced."""
        return replace(self, seed=int(seed),
                       train=replace(self.train, seed=int(seed)))


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable digest of the canonical JSON form."""
    text = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def save_config(cfg: ExperimentConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=1) + "\n")
    return path


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    return ExperimentConfig.from_dict(doc)


# ---------- presets ----------


def _mlp(in_width, width, depth, variant="modified"):
    return MlpSpec(in_width, (width,) * depth, width, variant=variant)


def _advdiff_desk() -> ExperimentConfig:
    # Shrunk copy of the full-scale advection-diffusion run: latent width
    # 64 instead of 128, 100 train functions instead of 500, 20000 steps
    # instead of 200000, per-role batch 256 instead of 1000.
    return ExperimentConfig(
        name="advdiff-desk",
        pde=PdeSpec.advection_diffusion(alpha=4.0, nu=0.01),
        grf=GrfSpec.warped(m=128),
        branch=_mlp(128, 64, 3),
        trunk=_mlp(2, 64, 4),
        train=TrainConfig(steps=20000, batch=256, kernel="ntk", alpha=1.0,
                          refresh_every=1000),
        n_train=100, n_test=10,
        n_ic=32, n_bc=32, n_interior=32,
        scaling={
            "width": [64, 128],
            "n_train": [100, 500],
            "n_test": [10, 100],
            "steps": [20000, 200000],
            "batch": [256, 1000],
            "collocation_per_function": [32, 128],
        },
    )


def _advdiff_paper() -> ExperimentConfig:
    return ExperimentConfig(
        name="advdiff-paper",
        pde=PdeSpec.advection_diffusion(alpha=4.0, nu=0.01),
        grf=GrfSpec.warped(m=128),
        branch=_mlp(128, 128, 3),
        trunk=_mlp(2, 128, 4),
        train=TrainConfig(steps=200000, batch=1000, kernel="ntk", alpha=1.0,
                          refresh_every=1000),
        n_train=500, n_test=100,
        n_ic=128, n_bc=128, n_interior=128,
    )


def _burgers_desk(nu: float, name: str) -> ExperimentConfig:
    # Benchmark viscous Burgers on (0, 1); moderate kernel weights
    # (exponent 1/2), shrunk from width 100 / depth 7 / 200000 steps.
    return ExperimentConfig(
        name=name,
        pde=PdeSpec.burgers(nu=nu, x_max=1.0),
        grf=GrfSpec.burgers_benchmark(m=101),
        branch=_mlp(101, 64, 4),
        trunk=_mlp(2, 64, 4),
        train=TrainConfig(steps=20000, batch=256, kernel="ntk", alpha=0.5,
                          refresh_every=1000),
        n_train=100, n_test=5,
        n_ic=32, n_bc=32, n_interior=32,
        scaling={
            "width": [64, 100],
            "depth": [4, 7],
            "n_train": [100, 500],
            "n_test": [5, 100],
            "steps": [20000, 200000],
            "batch": [256, 14000],
            "collocation_per_function": [32, 101],
        },
    )


def _burgers_paper() -> ExperimentConfig:
    return ExperimentConfig(
        name="burgers-paper",
        pde=PdeSpec.burgers(nu=1e-3, x_max=1.0),
        grf=GrfSpec.burgers_benchmark(m=101),
        branch=_mlp(101, 100, 7),
        trunk=_mlp(2, 100, 7),
        train=TrainConfig(steps=200000, batch=14000, kernel="ntk", alpha=0.5,
                          refresh_every=1000),
        n_train=500, n_test=100,
        n_ic=101, n_bc=101, n_interior=101,
    )


def _kdv_desk() -> ExperimentConfig:
    # Korteweg-de Vries with conjugate-kernel weights, shrunk from width
    # 128 / trunk depth 6 / branch depth 5 / 200000 steps.
    return ExperimentConfig(
        name="kdv-desk",
        pde=PdeSpec.kdv(delta=0.1),
        grf=GrfSpec.kdv_trig(m=128),
        branch=_mlp(128, 64, 4),
        trunk=_mlp(2, 64, 4),
        train=TrainConfig(steps=20000, batch=256, kernel="ck", alpha=1.0,
                          refresh_every=1000),
        n_train=100, n_test=5,
        n_ic=32, n_bc=32, n_interior=32,
        scaling={
            "width": [64, 128],
            "n_train": [100, 500],
            "n_test": [5, 100],
            "steps": [20000, 200000],
            "batch": [256, 16384],
            "collocation_per_function": [32, 128],
        },
    )


def _kdv_paper() -> ExperimentConfig:
    return ExperimentConfig(
        name="kdv-paper",
        pde=PdeSpec.kdv(delta=0.1),
        grf=GrfSpec.kdv_trig(m=128),
        branch=_mlp(128, 128, 5),
        trunk=_mlp(2, 128, 6),
        train=TrainConfig(steps=200000, batch=16384, kernel="ck", alpha=1.0,
                          refresh_every=1000),
        n_train=500, n_test=100,
        n_ic=128, n_bc=128, n_interior=128,
    )


PRESETS = {
    "advdiff-desk": _advdiff_desk,
    "advdiff-paper": _advdiff_paper,
    "burgers-desk": lambda: _burgers_desk(1e-3, "burgers-desk"),
    "burgers-1e-4-desk": lambda: _burgers_desk(1e-4, "burgers-1e-4-desk"),
    "burgers-paper": _burgers_paper,
    "kdv-desk": _kdv_desk,
    "kdv-paper": _kdv_paper,
}


def make_preset(name: str) -> ExperimentConfig:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset '{name}'; available: {', '.join(sorted(PRESETS))}"
        ) from None
    cfg = factory()
    cfg.validate()
    return cfg
