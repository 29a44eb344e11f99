"""Experiment pipeline: configs, presets, staged runs, studies, reports."""

from .config import (
    ExperimentConfig,
    PRESETS,
    config_hash,
    load_config,
    make_preset,
    save_config,
)
from .pipeline import (
    run_pipeline,
    stage_evaluate,
    stage_extract_basis,
    stage_sample_inputs,
    stage_solve_reference,
    stage_spectral_evolve,
    stage_train,
    stage_transfer,
    held_out_seeds,
    train_function_seeds,
)
from .report import write_report
from .study import StudyArm, StudyResult, rank_sweep, run_study, save_sweep

__all__ = [
    "ExperimentConfig",
    "PRESETS",
    "config_hash",
    "load_config",
    "make_preset",
    "save_config",
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
    "write_report",
    "StudyArm",
    "StudyResult",
    "run_study",
    "rank_sweep",
    "save_sweep",
]
