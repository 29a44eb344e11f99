"""Branch/trunk operator networks over the derivative engine.

An operator surrogate maps an input function sampled at ``m`` sensors and
a space-time point ``y = (x, t)`` to a scalar by merging two subnetworks
with a dot product over ``w`` latent features:

    G(u)(y) = sum_k  branch_k(u(x_1..x_m)) * trunk_k(y)

Both subnetworks are tanh MLPs; the ``modified`` variant mixes every
hidden state with two input encoders through a per-layer gate
``H <- U + Z * (V - U)``, ``Z = tanh(W H + b)``, which collapses to the
plain encoder path when the two encoders coincide.

Forward passes are written against :mod:`opbasis.diffkit` dispatchers, so
the same code serves raw evaluation, reverse-mode graphs, and Taylor jets.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffkit as dk
from .diffkit import ParamLayout, ParamVector
from .errors import (
    CheckpointCorruptError,
    CheckpointSpecMismatchError,
    CheckpointVersionError,
    ConfigError,
    ShapeError,
)

__all__ = [
    "MlpSpec",
    "DeepOnetModel",
    "mlp_layout",
    "mlp_forward",
    "param_count",
    "init_model",
    "deeponet_eval",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_FORMAT_VERSION",
]

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of one subnetwork.

    ``hidden`` lists the hidden-layer widths; the final layer is always
    linear.  ``variant`` is ``"plain"`` or ``"modified"``; the modified
    variant requires a uniform hidden width (the encoders feed every
    layer).
    """

    in_width: int
    hidden: tuple[int, ...]
    out_width: int
    variant: str = "plain"
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def validate(self) -> None:
        if self.in_width < 1 or self.out_width < 1 or any(h < 1 for h in self.hidden):
            raise ConfigError(f"all widths must be >= 1, got {self}")
        if not self.hidden:
            raise ConfigError("model networks need at least one hidden layer")
        if self.activation != "tanh":
            raise ConfigError(f"unsupported activation '{self.activation}'")
        if self.variant not in ("plain", "modified"):
            raise ConfigError(f"unknown variant '{self.variant}'")
        if self.variant == "modified" and len(set(self.hidden)) > 1:
            raise ConfigError("modified variant requires a uniform hidden width")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.in_width, *self.hidden, self.out_width)

    def to_dict(self) -> dict:
        return {
            "in_width": self.in_width,
            "hidden": list(self.hidden),
            "out_width": self.out_width,
            "variant": self.variant,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(
            in_width=int(d["in_width"]),
            hidden=tuple(int(h) for h in d["hidden"]),
            out_width=int(d["out_width"]),
            variant=str(d.get("variant", "plain")),
            activation=str(d.get("activation", "tanh")),
        )


def mlp_layout(spec: MlpSpec, prefix: str = "") -> ParamLayout:
    """Named tensor table for one subnetwork, in initialization order."""
    names: list[str] = []
    shapes: list[tuple[int, ...]] = []
    widths = spec.widths
    if spec.variant == "modified":
        w = spec.hidden[0]
        for enc in ("u", "v"):
            names += [f"{prefix}W{enc}", f"{prefix}b{enc}"]
            shapes += [(spec.in_width, w), (w,)]
    for i, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
        names += [f"{prefix}W{i}", f"{prefix}b{i}"]
        shapes += [(n_in, n_out), (n_out,)]
    return ParamLayout(tuple(names), tuple(shapes))


def param_count(spec: MlpSpec) -> int:
    """Closed-form parameter count: sum of (n_in + 1) * n_out per layer."""
    widths = spec.widths
    n = sum((a + 1) * b for a, b in zip(widths[:-1], widths[1:]))
    if spec.variant == "modified":
        n += 2 * (spec.in_width + 1) * spec.hidden[0]
    return n


def mlp_forward(spec: MlpSpec, weights: dict, x, prefix: str = ""):
    """Forward pass; ``x`` may be raw, a Node, or a TaylorValue batch."""
    n_layers = len(spec.widths) - 1
    if spec.variant == "modified":
        u = dk.tanh(dk.affine(x, weights[f"{prefix}Wu"], weights[f"{prefix}bu"]))
        v = dk.tanh(dk.affine(x, weights[f"{prefix}Wv"], weights[f"{prefix}bv"]))
        vu = dk.sub(v, u)
        h = x
        for i in range(n_layers - 1):
            z = dk.tanh(dk.affine(h, weights[f"{prefix}W{i}"], weights[f"{prefix}b{i}"]))
            h = dk.add(u, dk.mul(z, vu))
        return dk.affine(h, weights[f"{prefix}W{n_layers-1}"], weights[f"{prefix}b{n_layers-1}"])
    h = x
    for i in range(n_layers):
        h = dk.affine(h, weights[f"{prefix}W{i}"], weights[f"{prefix}b{i}"])
        if i < n_layers - 1:
            h = dk.tanh(h)
    return h


@dataclass
class DeepOnetModel:
    """Branch/trunk pair with a single flat parameter vector.

    Parameter names carry ``branch.`` / ``trunk.`` prefixes so training
    code can address either half (e.g. restrict kernel diagonals to the
    final linear layers).
    """

    branch: MlpSpec
    trunk: MlpSpec
    params: ParamVector
    seed: int | None = None
    step: int = 0
    pde_tag: str = ""

    def __post_init__(self):
        self.branch.validate()
        self.trunk.validate()
        if self.branch.out_width != self.trunk.out_width:
            raise ConfigError(
                f"branch and trunk must share the latent width, got "
                f"{self.branch.out_width} and {self.trunk.out_width}"
            )
        if self.trunk.in_width != 2:
            raise ConfigError("trunk input must be (x, t)")

    @property
    def width(self) -> int:
        return self.branch.out_width

    @property
    def n_sensors(self) -> int:
        return self.branch.in_width

    def final_layer_names(self) -> tuple[str, ...]:
        """Names of the output linear layers of both halves."""
        out = []
        for prefix, spec in (("branch.", self.branch), ("trunk.", self.trunk)):
            last = len(spec.widths) - 2
            out += [f"{prefix}W{last}", f"{prefix}b{last}"]
        return tuple(out)

    def branch_forward(self, u: np.ndarray, weights: dict | None = None):
        w = weights if weights is not None else self.params.unflatten()
        return mlp_forward(self.branch, w, u, prefix="branch.")

    def trunk_forward(self, y, weights: dict | None = None):
        w = weights if weights is not None else self.params.unflatten()
        return mlp_forward(self.trunk, w, y, prefix="trunk.")


def model_layout(branch: MlpSpec, trunk: MlpSpec) -> ParamLayout:
    lb = mlp_layout(branch, "branch.")
    lt = mlp_layout(trunk, "trunk.")
    return ParamLayout(lb.names + lt.names, lb.shapes + lt.shapes)


def init_model(
    branch: MlpSpec,
    trunk: MlpSpec,
    seed: int,
    pde_tag: str = "",
) -> DeepOnetModel:
    """Glorot-uniform weights, zero biases, fully determined by ``seed``."""
    branch.validate()
    trunk.validate()
    layout = model_layout(branch, trunk)
    r = np.random.default_rng(seed)
    pv = ParamVector.zeros(layout)
    for name in layout.names:
        view = pv.view(name)
        if view.ndim == 2:
            fan_in, fan_out = view.shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            view[...] = r.uniform(-limit, limit, size=view.shape)
        # biases stay zero
    return DeepOnetModel(branch, trunk, pv, seed=seed, pde_tag=pde_tag)


def deeponet_eval(model: DeepOnetModel, u: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Raw prediction at points ``y`` (P, 2) for sensor values ``u``.

    ``u`` may be a single (m,) function, shared across all points, or a
    (P, m) batch aligned row-by-row with ``y``.
    """
    u = np.asarray(u, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[1] != 2:
        raise ShapeError(f"points must have shape (P, 2), got {y.shape}")
    weights = model.params.unflatten()
    t_out = model.trunk_forward(y, weights)
    if u.ndim == 1:
        b_out = model.branch_forward(u[None, :], weights)
        return t_out @ b_out[0]
    if u.shape[0] != y.shape[0]:
        raise ShapeError("per-point sensor batch must align with the point batch")
    b_out = model.branch_forward(u, weights)
    return np.einsum("pw,pw->p", b_out, t_out)


# ---------- checkpoints ----------


def save_checkpoint(model: DeepOnetModel, path: str | Path) -> None:
    """Versioned JSON envelope with a bit-exact little-endian payload."""
    raw = np.ascontiguousarray(model.params.data, dtype="<f8").tobytes()
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": "deeponet-checkpoint",
        "branch": model.branch.to_dict(),
        "trunk": model.trunk.to_dict(),
        "seed": model.seed,
        "step": model.step,
        "pde_tag": model.pde_tag,
        "param_count": model.params.layout.size,
        "param_sha256": hashlib.sha256(raw).hexdigest(),
        "params_b64": base64.b64encode(raw).decode("ascii"),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1))


def load_checkpoint(
    path: str | Path,
    expect_branch: MlpSpec | None = None,
    expect_trunk: MlpSpec | None = None,
) -> DeepOnetModel:
    """Restore a model; architecture expectations are enforced if given."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointCorruptError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(doc, dict) or doc.get("kind") != "deeponet-checkpoint":
        raise CheckpointCorruptError(f"{path} is not a checkpoint file")
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format {version!r} unsupported (expected {CHECKPOINT_FORMAT_VERSION})"
        )
    try:
        branch = MlpSpec.from_dict(doc["branch"])
        trunk = MlpSpec.from_dict(doc["trunk"])
        raw = base64.b64decode(doc["params_b64"].encode("ascii"), validate=True)
        digest = doc["param_sha256"]
        count = int(doc["param_count"])
    except (KeyError, ValueError, TypeError) as e:
        raise CheckpointCorruptError(f"malformed checkpoint {path}: {e}") from e
    if hashlib.sha256(raw).hexdigest() != digest:
        raise CheckpointCorruptError(f"payload digest mismatch in {path}")
    data = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    layout = model_layout(branch, trunk)
    if data.size != layout.size or count != layout.size:
        raise CheckpointCorruptError(
            f"payload holds {data.size} values, architecture needs {layout.size}"
        )
    if expect_branch is not None and expect_branch != branch:
        raise CheckpointSpecMismatchError(
            f"checkpoint branch {branch} does not match requested {expect_branch}"
        )
    if expect_trunk is not None and expect_trunk != trunk:
        raise CheckpointSpecMismatchError(
            f"checkpoint trunk {trunk} does not match requested {expect_trunk}"
        )
    return DeepOnetModel(
        branch,
        trunk,
        ParamVector(layout, data),
        seed=doc.get("seed"),
        step=int(doc.get("step", 0)),
        pde_tag=str(doc.get("pde_tag", "")),
    )
