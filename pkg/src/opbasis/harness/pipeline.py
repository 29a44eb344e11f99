"""Staged experiment pipeline.

Each stage reads the artifacts of its upstream stages from a shared run
directory and writes its own subdirectory: CSV payloads next to a
``manifest.json`` that records the config digest, seeds, and artifact
names.  Manifests never contain wall-clock values; timing goes to a
separate ``timings.json`` so that rerunning a stage with the same config
and seeds reproduces every other file byte for byte.

Stage layout under the run directory:

    inputs/     drawn train and test input functions
    reference/  spectral reference solves of the test functions
    model/      trained checkpoint and loss log
    basis/      extracted basis, singular values, polynomial coefficients
    coeffs/     Galerkin coefficient paths for the test functions
    eval/       per-function errors of network and spectral predictions
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from ..basis import (
    LegendreExpansion,
    extract_basis,
    freeze_trunk,
    gauss_rule,
    legendre_project,
    load_basis,
    retained_count,
    save_basis,
)
from ..errors import ConfigError, MissingArtifactError
from ..metrics import ErrorReport, average_error, error_curve
from ..networks import deeponet_eval, init_model, load_checkpoint, save_checkpoint
from ..sampling import draw_function, load_inputs, sample_function, save_inputs, sensor_grid
from ..solvers import load_solution, save_solution, solve_reference
from ..spectral import GalerkinSystem, evolve, init_coeffs, load_coeffs, reconstruct, save_coeffs
from ..training import build_train_set, train
from .config import ExperimentConfig, config_hash

__all__ = [
    "run_pipeline",
    "stage_sample_inputs",
    "stage_solve_reference",
    "stage_train",
    "stage_transfer",
    "stage_extract_basis",
    "stage_spectral_evolve",
    "stage_evaluate",
    "train_function_seeds",
    "held_out_seeds",
]

# Held-out draws come from a separate entropy stream so the test
# functions never collide with the training stream for any base seed.
_TEST_STREAM = 0x7E57


def train_function_seeds(cfg: ExperimentConfig) -> tuple[int, ...]:
    """Seeds of the training input functions; matches the training stage."""
    ss = np.random.SeedSequence(cfg.seed)
    return tuple(int(s) for s in ss.generate_state(cfg.n_train, dtype=np.uint64))


def held_out_seeds(cfg: ExperimentConfig) -> tuple[int, ...]:
    ss = np.random.SeedSequence((cfg.seed, _TEST_STREAM))
    return tuple(int(s) for s in ss.generate_state(cfg.n_test, dtype=np.uint64))


# ---------- artifact bookkeeping ----------


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def _manifest(stage: str, cfg: ExperimentConfig, extra: dict) -> dict:
    doc = {
        "kind": "stage-manifest",
        "stage": stage,
        "config": cfg.to_dict(),
        "config_sha256": config_hash(cfg),
        "scaling": dict(cfg.scaling),
    }
    doc.update(extra)
    return doc


def _finish(stage_dir: Path, stage: str, t0: float, extra: dict | None = None) -> None:
    doc = {"stage": stage, "wall_time_s": time.perf_counter() - t0}
    if extra:
        doc.update(extra)
    _write_json(stage_dir / "timings.json", doc)


def _require(path: Path, what: str, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(
            f"{what} not found at {path}; run the {producer} stage first"
        )
    return path


def _read_manifest(stage_dir: Path, stage: str) -> dict:
    path = _require(stage_dir / "manifest.json", f"{stage} manifest", stage)
    return json.loads(path.read_text())


def _portable(path: Path, run_dir: Path) -> str:
    """Manifest form of a path: relative to the run dir when inside it,
    so rerunning the same config elsewhere gives identical manifests."""
    try:
        return str(path.resolve().relative_to(run_dir.resolve()))
    except ValueError:
        return str(path)


# ---------- stages ----------


def stage_sample_inputs(cfg: ExperimentConfig, run_dir: str | Path) -> Path:
    """Draw the train and held-out input functions at the sensor grid."""
    t0 = time.perf_counter()
    cfg.validate()
    out = Path(run_dir) / "inputs"
    out.mkdir(parents=True, exist_ok=True)
    blocks = {}
    for block, seeds in (("train", train_function_seeds(cfg)),
                         ("test", held_out_seeds(cfg))):
        values = np.stack([sample_function(cfg.grf, s) for s in seeds])
        save_inputs(out, block, cfg.grf, list(seeds), values)
        blocks[block] = {"seeds": list(seeds), "csv": f"{block}.csv",
                         "manifest": f"{block}.json"}
    _write_json(out / "manifest.json", _manifest("sample-inputs", cfg, {
        "blocks": blocks,
        "sensors": cfg.grf.m,
    }))
    _finish(out, "sample-inputs", t0)
    return out


def stage_solve_reference(cfg: ExperimentConfig, run_dir: str | Path) -> Path:
    """Solve the equation for every held-out function on the fine grid."""
    t0 = time.perf_counter()
    cfg.validate()
    run_dir = Path(run_dir)
    inputs = _read_manifest(run_dir / "inputs", "sample-inputs")
    seeds = [int(s) for s in inputs["blocks"]["test"]["seeds"]]
    out = run_dir / "reference"
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, s in enumerate(seeds):
        f = draw_function(cfg.grf, s)
        sol = solve_reference(cfg.pde, f, m=cfg.eval_m, n_steps=cfg.eval_steps)
        name = f"sol_{i:03d}"
        save_solution(out, name, cfg.pde, sol)
        names.append(name)
    _write_json(out / "manifest.json", _manifest("solve-reference", cfg, {
        "test_seeds": seeds,
        "solutions": names,
        "m": cfg.eval_m,
    }))
    _finish(out, "solve-reference", t0)
    return out


def _init_for_training(cfg: ExperimentConfig, checkpoint: str | None):
    source = checkpoint if checkpoint is not None else cfg.checkpoint
    if source is None:
        return init_model(cfg.branch, cfg.trunk, seed=cfg.seed,
                          pde_tag=cfg.pde.tag), None
    path = _require(Path(source), "source checkpoint", "train")
    model = load_checkpoint(path, expect_branch=cfg.branch, expect_trunk=cfg.trunk)
    return model, str(source)


def stage_train(cfg: ExperimentConfig, run_dir: str | Path, *,
                checkpoint: str | None = None, dry_run: bool = False) -> Path:
    """Optimize the operator network; write checkpoint, log, manifest.

    ``checkpoint`` switches to transfer initialization from a trained
    model with the same architecture.  ``dry_run`` writes the manifest
    (the hyper-parameter echo) and stops before any optimization, which
    is how full-scale configs can be inspected on a desk machine.
    """
    t0 = time.perf_counter()
    cfg.validate()
    out = Path(run_dir) / "model"
    out.mkdir(parents=True, exist_ok=True)
    model, source = _init_for_training(cfg, checkpoint)
    doc = _manifest("train", cfg, {
        "init": "random" if source is None else "transfer",
        "source_checkpoint": source,
        "hyper": {
            "train_functions": cfg.n_train,
            "test_functions": cfg.n_test,
            "batch": cfg.train.batch,
            "steps": cfg.train.steps,
            "width": cfg.width,
            "sensors": cfg.grf.m,
            "kernel": cfg.train.kernel,
            "alpha": cfg.train.alpha,
        },
        "dry_run": bool(dry_run),
        "artifacts": [] if dry_run else ["checkpoint.json", "train_log.csv"],
    })
    _write_json(out / "manifest.json", doc)
    if dry_run:
        _finish(out, "train", t0)
        return out
    tset = build_train_set(cfg.pde, cfg.grf, cfg.n_train,
                           cfg.n_ic, cfg.n_bc, cfg.n_interior, seed=cfg.seed)
    log = train(model, tset, cfg.train)
    save_checkpoint(model, out / "checkpoint.json")
    log.save(out / "train_log.csv")
    _finish(out, "train", t0, {
        "train_wall_s": log.wall_time,
        "kernel_wall_s": log.kernel_time,
        "skipped_steps": log.skipped,
    })
    return out


def stage_transfer(cfg: ExperimentConfig, run_dir: str | Path, *,
                   checkpoint: str | None = None, dry_run: bool = False) -> Path:
    """Training with parameters initialized from a trained checkpoint."""
    source = checkpoint if checkpoint is not None else cfg.checkpoint
    if source is None:
        raise ConfigError("transfer needs a source checkpoint "
                          "(--checkpoint or the config's checkpoint field)")
    return stage_train(cfg, run_dir, checkpoint=source, dry_run=dry_run)


def stage_extract_basis(cfg: ExperimentConfig, run_dir: str | Path, *,
                        checkpoint: str | None = None) -> Path:
    """Freeze the trunk, factor it, and store the basis with diagnostics."""
    t0 = time.perf_counter()
    cfg.validate()
    run_dir = Path(run_dir)
    source = Path(checkpoint) if checkpoint else run_dir / "model" / "checkpoint.json"
    _require(source, "trained checkpoint", "train")
    model = load_checkpoint(source)
    rule = gauss_rule(cfg.quad_nodes, cfg.pde.x_max)
    tau = freeze_trunk(model, rule, cfg.freeze_time)
    basis = extract_basis(tau, rule)
    expansion = legendre_project(basis, cfg.legendre_degree)
    out = run_dir / "basis"
    out.mkdir(parents=True, exist_ok=True)
    save_basis(out, "basis", basis, expansion)
    retained = retained_count(basis.sigma, cfg.cutoff)
    sigma = basis.sigma
    _write_json(out / "manifest.json", _manifest("extract-basis", cfg, {
        "checkpoint": _portable(source, run_dir),
        "freeze_time": cfg.freeze_time,
        "quad_nodes": cfg.quad_nodes,
        "legendre_degree": cfg.legendre_degree,
        "cutoff": cfg.cutoff,
        "size": int(basis.size),
        "retained": int(retained),
        "sigma_max": float(sigma[0]),
        "sigma_min": float(sigma[-1]),
        "basis_manifest": "basis.json",
    }))
    _finish(out, "extract-basis", t0)
    return out


def _load_truncated(run_dir: Path, cfg: ExperimentConfig):
    """Basis and expansion from disk, cut at the configured threshold."""
    man = _read_manifest(run_dir / "basis", "extract-basis")
    basis, expansion = load_basis(run_dir / "basis" / man["basis_manifest"])
    if expansion is None:
        raise MissingArtifactError("stored basis lacks polynomial coefficients")
    r = retained_count(basis.sigma, cfg.cutoff)
    if r == 0:
        raise ConfigError(f"cutoff {cfg.cutoff:g} retains no basis functions")
    return man, LegendreExpansion(coef=expansion.coef[:r], x_max=expansion.x_max), r


def stage_spectral_evolve(cfg: ExperimentConfig, run_dir: str | Path) -> Path:
    """Evolve the retained-basis coefficients for every test function."""
    t0 = time.perf_counter()
    cfg.validate()
    run_dir = Path(run_dir)
    _, expansion, r = _load_truncated(run_dir, cfg)
    inputs = _read_manifest(run_dir / "inputs", "sample-inputs")
    seeds = [int(s) for s in inputs["blocks"]["test"]["seeds"]]
    rule = gauss_rule(cfg.quad_nodes, cfg.pde.x_max)
    system = GalerkinSystem.build(expansion, cfg.pde, rule)
    out = run_dir / "coeffs"
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, s in enumerate(seeds):
        f = draw_function(cfg.grf, s)
        a0 = init_coeffs(system, f)
        path = evolve(system, a0, n_steps=cfg.evolve_steps)
        name = f"path_{i:03d}"
        save_coeffs(out, name, cfg.pde, path)
        names.append(name)
    _write_json(out / "manifest.json", _manifest("spectral-evolve", cfg, {
        "test_seeds": seeds,
        "paths": names,
        "retained": int(r),
        "evolve_steps": cfg.evolve_steps,
    }))
    _finish(out, "spectral-evolve", t0)
    return out


def _predict_field(model, u_row: np.ndarray, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Network prediction on the stored space-time lattice, times as rows."""
    X, T = np.meshgrid(x, t)
    pts = np.column_stack([X.ravel(), T.ravel()])
    return deeponet_eval(model, u_row, pts).reshape(len(t), len(x))


def stage_evaluate(cfg: ExperimentConfig, run_dir: str | Path, *,
                   checkpoint: str | None = None) -> Path:
    """Per-function errors of the network and, when present, the
    spectral evolution, against the stored reference solves."""
    t0 = time.perf_counter()
    cfg.validate()
    run_dir = Path(run_dir)
    source = Path(checkpoint) if checkpoint else run_dir / "model" / "checkpoint.json"
    _require(source, "trained checkpoint", "train")
    model = load_checkpoint(source)
    inputs_dir = run_dir / "inputs"
    _read_manifest(inputs_dir, "sample-inputs")
    grf, seeds, values = load_inputs(inputs_dir / "test.json")
    ref_man = _read_manifest(run_dir / "reference", "solve-reference")
    coeffs_man = None
    if (run_dir / "coeffs" / "manifest.json").exists():
        coeffs_man = _read_manifest(run_dir / "coeffs", "spectral-evolve")
    expansion = None
    if coeffs_man is not None:
        _, expansion, _ = _load_truncated(run_dir, cfg)

    model_errors, spectral_errors = [], []
    for i in range(len(seeds)):
        _, ref = load_solution(run_dir / "reference" / f"{ref_man['solutions'][i]}.json")
        pred = _predict_field(model, values[i], ref.x, ref.t)
        model_errors.append(average_error(error_curve(pred, ref.u), ref.t))
        if coeffs_man is not None:
            _, cpath = load_coeffs(run_dir / "coeffs" / f"{coeffs_man['paths'][i]}.json")
            if cpath.t.shape != ref.t.shape or not np.allclose(cpath.t, ref.t,
                                                               rtol=0, atol=1e-9):
                raise ConfigError(
                    "coefficient path and reference store different time grids; "
                    "pick evolve_steps and eval_steps with a common stride"
                )
            recon = reconstruct(expansion, cpath.a, ref.x)
            spectral_errors.append(average_error(error_curve(recon, ref.u), ref.t))

    out = run_dir / "eval"
    out.mkdir(parents=True, exist_ok=True)
    lines = ["function,seed,model_error,spectral_error"]
    for i, s in enumerate(seeds):
        spec_err = spectral_errors[i] if spectral_errors else float("nan")
        lines.append(f"{i},{s},{model_errors[i]:.17g},{spec_err:.17g}")
    (out / "errors.csv").write_text("\n".join(lines) + "\n")

    model_rep = ErrorReport.from_errors(model_errors)
    summary = {"model": {"mean": model_rep.mean, "std": model_rep.std,
                         "percent": model_rep.as_percent()}}
    if spectral_errors:
        spec_rep = ErrorReport.from_errors(spectral_errors)
        summary["spectral"] = {"mean": spec_rep.mean, "std": spec_rep.std,
                               "percent": spec_rep.as_percent()}
    _write_json(out / "manifest.json", _manifest("evaluate", cfg, {
        "checkpoint": _portable(source, run_dir),
        "test_seeds": [int(s) for s in seeds],
        "errors_csv": "errors.csv",
        "summary": summary,
    }))
    _finish(out, "evaluate", t0)
    return out


_STAGE_ORDER = ("sample-inputs", "solve-reference", "train",
                "extract-basis", "spectral-evolve", "evaluate")


def run_pipeline(cfg: ExperimentConfig, run_dir: str | Path, *,
                 checkpoint: str | None = None,
                 stages: tuple[str, ...] = _STAGE_ORDER) -> Path:
    """Execute stages in dependency order inside one run directory."""
    run_dir = Path(run_dir)
    known = set(_STAGE_ORDER)
    bad = [s for s in stages if s not in known]
    if bad:
        raise ConfigError(f"unknown pipeline stages {bad}")
    for stage in _STAGE_ORDER:
        if stage not in stages:
            continue
        if stage == "sample-inputs":
            stage_sample_inputs(cfg, run_dir)
        elif stage == "solve-reference":
            stage_solve_reference(cfg, run_dir)
        elif stage == "train":
            stage_train(cfg, run_dir, checkpoint=checkpoint)
        elif stage == "extract-basis":
            stage_extract_basis(cfg, run_dir)
        elif stage == "spectral-evolve":
            stage_spectral_evolve(cfg, run_dir)
        elif stage == "evaluate":
            stage_evaluate(cfg, run_dir)
    return run_dir
