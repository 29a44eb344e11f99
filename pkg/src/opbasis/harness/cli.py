"""Command-line entry point for the experiment pipeline.

Every subcommand maps to one pipeline stage and operates on a run
directory.  The directory defaults to ``$OPBASIS_OUT/<config name>``
(falling back to ``runs/<config name>``); ``--out`` points at a run
directory explicitly.

Exit codes: 0 success, 2 usage error, 3 invalid configuration,
4 missing upstream artifact, 5 runtime failure inside a stage.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from ..errors import ConfigError, MissingArtifactError, OpbasisError
from .config import ExperimentConfig, load_config, make_preset
from .pipeline import (
    stage_evaluate,
    stage_extract_basis,
    stage_sample_inputs,
    stage_solve_reference,
    stage_spectral_evolve,
    stage_train,
    stage_transfer,
)
from .report import write_report

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_USAGE", "EXIT_CONFIG",
           "EXIT_MISSING", "EXIT_RUNTIME"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_RUNTIME = 5

OUT_ENV = "OPBASIS_OUT"

_STAGE_HELP = {
    "sample-inputs": "draw train and held-out input functions",
    "solve-reference": "solve the equation for the held-out functions",
    "train": "optimize the operator network",
    "transfer": "train with parameters initialized from a checkpoint",
    "extract-basis": "factor the frozen trunk into an orthonormal basis",
    "spectral-evolve": "evolve retained-basis coefficients in time",
    "evaluate": "score network and spectral predictions against references",
    "report": "render Markdown tables and SVG plots for a run or study",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="opbasis",
        description="Staged pipeline for physics-informed operator networks.",
    )
    sub = p.add_subparsers(dest="command", required=True, metavar="STAGE")
    for name, text in _STAGE_HELP.items():
        sp = sub.add_parser(name, help=text, description=text)
        group = sp.add_mutually_exclusive_group(required=name != "report")
        group.add_argument("--config", metavar="PATH",
                           help="JSON experiment config")
        group.add_argument("--preset", metavar="NAME",
                           help="named built-in config")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the sampling and optimization seeds")
        sp.add_argument("--out", metavar="DIR", default=None,
                        help=f"run directory (default ${OUT_ENV}/<name>)")
        sp.add_argument("--cutoff", type=float, default=None,
                        help="override the relative singular-value cutoff")
        sp.add_argument("--freeze-time", type=int, choices=(0, 1), default=None,
                        help="trunk evaluation time for basis extraction")
        if name in ("train", "transfer", "extract-basis", "evaluate"):
            sp.add_argument("--checkpoint", metavar="PATH", default=None,
                            help="parameter source (transfer) or model to load")
        if name in ("train", "transfer"):
            sp.add_argument("--dry-run", action="store_true",
                            help="write the manifest and stop before optimizing")
    return p


def _resolve_config(args) -> ExperimentConfig | None:
    if args.preset:
        cfg = make_preset(args.preset)
    elif args.config:
        cfg = load_config(args.config)
    else:
        return None
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.cutoff is not None:
        cfg = replace(cfg, cutoff=float(args.cutoff))
    if args.freeze_time is not None:
        cfg = replace(cfg, freeze_time=float(args.freeze_time))
    cfg.validate()
    return cfg


def _run_dir(args, cfg: ExperimentConfig | None) -> Path:
    if args.out is not None:
        return Path(args.out)
    root = Path(os.environ.get(OUT_ENV, "runs"))
    if cfg is None:
        raise ConfigError("report needs --out, --config, or --preset "
                          "to locate the run directory")
    return root / cfg.name


def _dispatch(args) -> int:
    cfg = _resolve_config(args)
    run_dir = _run_dir(args, cfg)
    cmd = args.command
    if cmd == "report":
        path = write_report(run_dir)
        print(path)
        return EXIT_OK
    assert cfg is not None  # the parser enforces --config/--preset here
    if cmd == "sample-inputs":
        out = stage_sample_inputs(cfg, run_dir)
    elif cmd == "solve-reference":
        out = stage_solve_reference(cfg, run_dir)
    elif cmd == "train":
        out = stage_train(cfg, run_dir, checkpoint=args.checkpoint,
                          dry_run=args.dry_run)
    elif cmd == "transfer":
        out = stage_transfer(cfg, run_dir, checkpoint=args.checkpoint,
                             dry_run=args.dry_run)
    elif cmd == "extract-basis":
        out = stage_extract_basis(cfg, run_dir, checkpoint=args.checkpoint)
    elif cmd == "spectral-evolve":
        out = stage_spectral_evolve(cfg, run_dir)
    elif cmd == "evaluate":
        out = stage_evaluate(cfg, run_dir, checkpoint=args.checkpoint)
    else:
        raise ConfigError(f"unhandled command '{cmd}'")
    print(out / "manifest.json")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on unknown stages or malformed flags
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return _dispatch(args)
    except ConfigError as e:
        print(f"opbasis: invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifactError, FileNotFoundError) as e:
        print(f"opbasis: missing artifact: {e}", file=sys.stderr)
        return EXIT_MISSING
    except OpbasisError as e:
        print(f"opbasis: stage failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
