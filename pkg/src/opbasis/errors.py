"""Shared exception types.

Kept in one place so callers can catch coarse categories (``OpbasisError``)
or precise ones (e.g. ``CheckpointVersionError``) without importing the
module that raised them.
"""

from __future__ import annotations


class OpbasisError(Exception):
    """Base class for all package-specific failures."""


class ShapeError(OpbasisError, ValueError):
    """Operand shapes are inconsistent with the requested operation."""


class DerivativeOrderError(OpbasisError, ValueError):
    """Requested Taylor order is outside the supported range."""


class UnregisteredPrimitiveError(OpbasisError, TypeError):
    """An operation was requested that the derivative engine does not know."""


class ConfigError(OpbasisError, ValueError):
    """An experiment configuration failed validation."""


class CheckpointError(OpbasisError):
    """Base class for checkpoint load failures."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version is not supported by this build."""


class CheckpointCorruptError(CheckpointError):
    """Checkpoint payload is unreadable or fails its integrity checks."""


class CheckpointSpecMismatchError(CheckpointError):
    """Checkpoint architecture does not match the requested model."""


class SolverBlowupError(OpbasisError, FloatingPointError):
    """A time integration produced non-finite values.

    Carries the step index and physical time at which the field first
    became non-finite.
    """

    def __init__(self, message: str, step: int | None = None, time: float | None = None):
        super().__init__(message)
        self.step = step
        self.time = time


class FactorizationError(OpbasisError, RuntimeError):
    """A covariance factorization failed even at the maximum jitter."""


class MissingArtifactError(OpbasisError, FileNotFoundError):
    """A pipeline stage requires an artifact that does not exist yet."""
