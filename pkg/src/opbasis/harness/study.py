"""Multi-seed comparison studies.

A study runs two or more configurations over one shared list of seeds
and reports each arm's error statistics side by side.  Because every
arm sees identical seeds, differences between arms come from the
configurations alone; two arms with identical configs produce identical
numbers, which doubles as an end-to-end determinism check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..basis import LegendreExpansion, gauss_rule
from ..errors import ConfigError, SolverBlowupError
from ..metrics import aggregate, average_error, error_curve
from ..pde import PdeSpec
from ..solvers import solve_reference
from ..spectral import GalerkinSystem, evolve, init_coeffs, reconstruct
from .config import ExperimentConfig
from .pipeline import run_pipeline

__all__ = [
    "StudyArm",
    "ArmResult",
    "StudyResult",
    "run_study",
    "rank_sweep",
    "save_sweep",
    "load_sweep",
]

_STUDY_STAGES = ("sample-inputs", "solve-reference", "train",
                 "extract-basis", "evaluate")


@dataclass(frozen=True)
class StudyArm:
    """One configuration entering a study.

    ``seeds`` may restate the shared seed list; anything else is
    rejected so arms can never silently run on different draws.
    """

    label: str
    config: ExperimentConfig
    checkpoint: str | None = None
    seeds: tuple[int, ...] | None = None


@dataclass
class ArmResult:
    label: str
    kernel: str
    seeds: tuple[int, ...]
    errors: tuple[float, ...]     # per-seed mean test error
    retained: tuple[int, ...]     # per-seed retained basis count
    mean: float
    std: float
    wall_time: float              # total training wall clock over the seeds


@dataclass
class StudyResult:
    seeds: tuple[int, ...]
    arms: list[ArmResult]
    timing_ratio: float | None    # ntk wall / ck wall when both arms exist
    pde: dict | None = None       # target equation, for report context rows

    def arm(self, label: str) -> ArmResult:
        for a in self.arms:
            if a.label == label:
                return a
        raise KeyError(f"no study arm labelled '{label}'")

    def save(self, directory: str | Path) -> Path:
        """Deterministic summary plus a separate wall-clock file."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        doc = {
            "kind": "study",
            "seeds": list(self.seeds),
            "pde": self.pde,
            "arms": [{
                "label": a.label,
                "kernel": a.kernel,
                "errors": list(a.errors),
                "retained": list(a.retained),
                "mean": a.mean,
                "std": a.std,
            } for a in self.arms],
        }
        path = directory / "study.json"
        path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
        timing = {
            "kind": "study-timings",
            "wall_time_s": {a.label: a.wall_time for a in self.arms},
            "timing_ratio_ntk_over_ck": self.timing_ratio,
        }
        (directory / "study_timings.json").write_text(
            json.dumps(timing, sort_keys=True, indent=1) + "\n")
        return path


def _arm_run(arm: StudyArm, seed: int, root: Path,
             stages: tuple[str, ...]) -> tuple[float, int, float]:
    cfg = arm.config.with_seed(seed)
    run_dir = root / arm.label / f"seed{seed}"
    run_pipeline(cfg, run_dir, checkpoint=arm.checkpoint, stages=stages)
    summary = json.loads((run_dir / "eval" / "manifest.json").read_text())
    err = float(summary["summary"]["model"]["mean"])
    basis_man = json.loads((run_dir / "basis" / "manifest.json").read_text())
    timings = json.loads((run_dir / "model" / "timings.json").read_text())
    return err, int(basis_man["retained"]), float(timings.get("train_wall_s", 0.0))


def run_study(arms, seeds, root: str | Path, *,
              stages: tuple[str, ...] = _STUDY_STAGES) -> StudyResult:
    """Run every arm over the shared seeds and aggregate the errors."""
    arms = list(arms)
    seeds = tuple(int(s) for s in seeds)
    if len(arms) < 2:
        raise ConfigError("a study compares at least two arms")
    if len(seeds) == 0 or len(set(seeds)) != len(seeds):
        raise ConfigError("study seeds must be a nonempty list without repeats")
    labels = [a.label for a in arms]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"arm labels must be unique, got {labels}")
    for a in arms:
        if a.seeds is not None and tuple(int(s) for s in a.seeds) != seeds:
            raise ConfigError(
                f"arm '{a.label}' lists seeds {a.seeds}, study uses {seeds}; "
                "all arms must share one seed set"
            )
    root = Path(root)
    results = []
    for arm in arms:
        errs, kept, walls = [], [], 0.0
        for seed in seeds:
            e, r, w = _arm_run(arm, seed, root, stages)
            errs.append(e)
            kept.append(r)
            walls += w
        mean, std = aggregate(errs)
        results.append(ArmResult(
            label=arm.label, kernel=arm.config.train.kernel, seeds=seeds,
            errors=tuple(errs), retained=tuple(kept),
            mean=mean, std=std, wall_time=walls,
        ))
    ratio = None
    by_kernel = {}
    for a in results:
        by_kernel.setdefault(a.kernel, []).append(a)
    if len(by_kernel.get("ntk", [])) == 1 and len(by_kernel.get("ck", [])) == 1:
        ck_wall = by_kernel["ck"][0].wall_time
        if ck_wall > 0:
            ratio = by_kernel["ntk"][0].wall_time / ck_wall
    out = StudyResult(seeds=seeds, arms=results, timing_ratio=ratio,
                      pde=arms[0].config.pde.to_dict())
    out.save(root)
    return out


# ---------- truncation sweeps ----------


def rank_sweep(expansion: LegendreExpansion, pde: PdeSpec, funcs, ks, *,
               quad_nodes: int = 512, evolve_steps: int = 2000,
               eval_m: int = 256, eval_steps: int | None = None) -> np.ndarray:
    """Spectral-evolution error of each function at several basis sizes.

    Returns an array of shape (len(funcs), len(ks)).  A truncation too
    aggressive to integrate counts as an infinite error rather than
    aborting the sweep.
    """
    ks = [int(k) for k in ks]
    if not ks or any(k < 1 or k > expansion.size for k in ks):
        raise ConfigError(f"sweep sizes must lie in [1, {expansion.size}], got {ks}")
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ConfigError("sweep sizes must increase strictly")
    funcs = list(funcs)
    refs = [solve_reference(pde, f, m=eval_m, n_steps=eval_steps) for f in funcs]
    rule = gauss_rule(quad_nodes, pde.x_max)
    errors = np.empty((len(funcs), len(ks)))
    for j, k in enumerate(ks):
        exp_k = LegendreExpansion(coef=expansion.coef[:k], x_max=expansion.x_max)
        system = GalerkinSystem.build(exp_k, pde, rule)
        for i, f in enumerate(funcs):
            ref = refs[i]
            try:
                path = evolve(system, init_coeffs(system, f),
                              n_steps=evolve_steps)
            except SolverBlowupError:
                errors[i, j] = np.inf
                continue
            if path.t.shape != ref.t.shape or not np.allclose(path.t, ref.t,
                                                              rtol=0, atol=1e-9):
                raise ConfigError(
                    "sweep and reference store different time grids; pick "
                    "evolve_steps and eval_steps with a common stride"
                )
            recon = reconstruct(exp_k, path.a, ref.x)
            errors[i, j] = average_error(error_curve(recon, ref.u), ref.t)
    return errors


def save_sweep(directory: str | Path, ks, errors: np.ndarray) -> Path:
    """Write one sweep as CSV: a row per basis size, a column per function."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    errors = np.asarray(errors, dtype=np.float64)
    ks = [int(k) for k in ks]
    if errors.ndim != 2 or errors.shape[1] != len(ks):
        raise ConfigError(
            f"sweep errors must be (n_functions, {len(ks)}), got {errors.shape}"
        )
    header = "k," + ",".join(f"f{i}" for i in range(errors.shape[0]))
    lines = [header]
    for j, k in enumerate(ks):
        lines.append(f"{k}," + ",".join(f"{e:.17g}" for e in errors[:, j]))
    path = directory / "sweep.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


def load_sweep(path: str | Path) -> tuple[list[int], np.ndarray]:
    """Inverse of save_sweep; returns (ks, errors (n_functions, n_ks))."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    ks = [int(k) for k in rows[:, 0]]
    return ks, rows[:, 1:].T.copy()
