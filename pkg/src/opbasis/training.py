"""Physics-informed training of operator networks.

The loss is assembled from three roles of scalar constraint terms:
initial-condition mismatches s(x, 0) - u(x), periodic boundary gaps of
the prediction and its x-derivatives, and interior equation residuals.
With per-term weights lambda_k the batch loss is

    L = (2 / N*) sum_k lambda_k T_k^2,

N* counting the terms in the batch.  Weights start at 1 and are
periodically refreshed from the diagonal of a tangent-kernel matrix:
lambda_k = (max_j H_jj / max(H_kk, 1e-12))^alpha with
H_kk = ||grad_theta T_k||^2.  The full kernel uses every trainable
parameter; the restricted variant keeps only the final linear layers of
branch and trunk, which prices the refresh at a fraction of the cost.

Optimization is Adam with a smooth geometric learning-rate decay.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffkit as dk
from .errors import ConfigError, ShapeError
from .metrics import ErrorReport, average_error, error_curve
from .networks import DeepOnetModel, deeponet_eval, mlp_forward
from .pde import PdeSpec, boundary_gaps_of_field, make_deeponet_field, residual_of_field
from .sampling import GrfSpec, draw_function, sensor_grid
from .solvers import solve_reference

__all__ = [
    "TrainConfig",
    "TrainSet",
    "build_train_set",
    "WeightState",
    "physics_loss",
    "data_loss",
    "kernel_diag",
    "update_weights",
    "AdamState",
    "adam_step",
    "learning_rate",
    "TrainingLog",
    "train",
    "evaluate_model",
]

WEIGHT_FLOOR = 1e-12
ROLES = ("ic", "bc", "interior")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for one run."""

    steps: int = 20000
    batch: int = 256            # per role
    lr: float = 1e-3
    decay_rate: float = 0.9
    decay_every: float = 2000.0
    kernel: str = "ntk"         # "ntk" | "ck" | "none"
    alpha: float = 1.0          # weight exponent, 1 or 1/2
    refresh_every: int = 1000
    trainable: str = "all"      # "all" | "final"
    seed: int = 0
    log_every: int = 100
    kernel_chunk: int = 256

    def validate(self) -> None:
        if self.steps < 0 or self.batch < 1:
            raise ConfigError("steps must be >= 0 and batch >= 1")
        if self.kernel not in ("ntk", "ck", "none"):
            raise ConfigError(f"unknown kernel mode '{self.kernel}'")
        if self.trainable not in ("all", "final"):
            raise ConfigError(f"unknown trainable mode '{self.trainable}'")
        if self.lr <= 0 or self.decay_rate <= 0 or self.decay_every <= 0:
            raise ConfigError("learning-rate schedule values must be positive")
        if self.alpha <= 0:
            raise ConfigError("weight exponent must be positive")


@dataclass
class TrainSet:
    """Sensor values plus fixed collocation pools, one row per function."""

    pde: PdeSpec
    grf: GrfSpec
    u: np.ndarray           # (N, m)
    func_seeds: tuple[int, ...]
    ic_x: np.ndarray        # (N, P_ic)
    ic_target: np.ndarray   # (N, P_ic)
    bc_t: np.ndarray        # (N, P_bc)
    int_xt: np.ndarray      # (N, P_int, 2)

    @property
    def n_functions(self) -> int:
        return self.u.shape[0]

    @property
    def n_orders(self) -> int:
        return len(self.pde.bc_gap_orders)

    def pool_size(self, role: str) -> int:
        if role == "ic":
            return self.ic_x.size
        if role == "bc":
            return self.bc_t.size
        if role == "interior":
            return self.int_xt.shape[0] * self.int_xt.shape[1]
        raise ConfigError(f"unknown role '{role}'")

    def term_count(self) -> int:
        """Total constraint terms across the pools."""
        return self.pool_size("ic") + self.n_orders * self.pool_size("bc") \
            + self.pool_size("interior")


def build_train_set(pde: PdeSpec, grf: GrfSpec, n_functions: int,
                    n_ic: int, n_bc: int, n_interior: int, seed: int) -> TrainSet:
    """Draw input functions and fixed collocation pools.

    Function draws get seeds derived from ``seed`` so the same call is
    reproducible and different base seeds give disjoint streams.
    """
    pde.validate()
    grf.validate()
    if abs(pde.x_max - grf.x_max) > 1e-12:
        raise ConfigError("PDE and input family must share the spatial domain")
    ss = np.random.SeedSequence(seed)
    func_seeds = tuple(int(s) for s in ss.generate_state(n_functions, dtype=np.uint64))
    rng = np.random.default_rng(ss.spawn(1)[0])
    grid = sensor_grid(grf)
    u = np.empty((n_functions, grf.m))
    ic_x = rng.uniform(0.0, pde.x_max, size=(n_functions, n_ic))
    ic_target = np.empty_like(ic_x)
    for i, fs in enumerate(func_seeds):
        f = draw_function(grf, fs)
        u[i] = f(grid)
        ic_target[i] = f(ic_x[i])
    bc_t = rng.uniform(0.0, pde.t_max, size=(n_functions, n_bc))
    int_xt = np.stack([
        rng.uniform(0.0, pde.x_max, size=(n_functions, n_interior)),
        rng.uniform(0.0, pde.t_max, size=(n_functions, n_interior)),
    ], axis=2)
    return TrainSet(pde=pde, grf=grf, u=u, func_seeds=func_seeds,
                    ic_x=ic_x, ic_target=ic_target, bc_t=bc_t, int_xt=int_xt)


@dataclass
class WeightState:
    """Per-term loss weights, flat per role.

    The boundary array is order-major: entry o * pool + k weights gap
    order o at pool slot k.
    """

    ic: np.ndarray
    bc: np.ndarray
    interior: np.ndarray

    @classmethod
    def ones(cls, tset: TrainSet) -> "WeightState":
        return cls(
            ic=np.ones(tset.pool_size("ic")),
            bc=np.ones(tset.n_orders * tset.pool_size("bc")),
            interior=np.ones(tset.pool_size("interior")),
        )

    def get(self, role: str) -> np.ndarray:
        return getattr(self, role)


def _field_for(model: DeepOnetModel, tset: TrainSet, leaves, flat_idx, pool_cols):
    """Field closure whose branch rows follow the selected pool entries."""
    fi, pi = np.divmod(np.asarray(flat_idx), pool_cols)
    branch_out = mlp_forward(model.branch, leaves, tset.u[fi], prefix="branch.")
    return make_deeponet_field(model, branch_out, leaves), fi, pi


def _role_terms(model: DeepOnetModel, tset: TrainSet, leaves, role: str,
                flat_idx: np.ndarray):
    """Constraint term Nodes for pool entries ``flat_idx`` of one role.

    Returns a list of (term, weight_slot) pairs; boundary entries expand
    into one term vector per gap order.
    """
    if role == "ic":
        fld, fi, pi = _field_for(model, tset, leaves, flat_idx, tset.ic_x.shape[1])
        x = tset.ic_x[fi, pi][:, None]
        pred = fld(x, np.zeros_like(x))
        return [(dk.sub(pred, tset.ic_target[fi, pi]), flat_idx)]
    if role == "bc":
        fld, fi, pi = _field_for(model, tset, leaves, flat_idx, tset.bc_t.shape[1])
        gaps = boundary_gaps_of_field(fld, tset.bc_t[fi, pi], tset.pde)
        pool = tset.pool_size("bc")
        return [(gap, o * pool + flat_idx) for o, gap in enumerate(gaps)]
    if role == "interior":
        fld, fi, pi = _field_for(model, tset, leaves, flat_idx, tset.int_xt.shape[1])
        pts = tset.int_xt[fi, pi]
        return [(residual_of_field(fld, pts, tset.pde), flat_idx)]
    raise ConfigError(f"unknown role '{role}'")


def physics_loss(model: DeepOnetModel, tset: TrainSet, weights: WeightState,
                 sel: dict[str, np.ndarray], leaves=None):
    """Weighted decoupled loss over the selected pool entries.

    Returns ``(loss, parts)`` where ``parts`` maps each role to its raw
    contribution (already scaled by 2/N*).
    """
    if leaves is None:
        leaves = model.params.leaves()
    pairs = []
    n_star = 0
    for role in ROLES:
        idx = np.asarray(sel[role])
        for term, slots in _role_terms(model, tset, leaves, role, idx):
            pairs.append((role, term, weights.get(role)[slots]))
            n_star += idx.size
    scale = 2.0 / n_star
    parts = {r: 0.0 for r in ROLES}
    total = None
    for role, term, lam in pairs:
        contrib = dk.sum_(dk.mul(dk.mul(term, term), lam))
        parts[role] += scale * float(np.asarray(dk.value_of(contrib)).ravel()[0])
        total = contrib if total is None else dk.add(total, contrib)
    return dk.scale(total, scale), parts


def data_loss(model: DeepOnetModel, u_rows: np.ndarray, points: np.ndarray,
              targets: np.ndarray, leaves=None):
    """Mean squared supervised mismatch at labelled points."""
    if leaves is None:
        leaves = model.params.leaves()
    points = np.asarray(points, dtype=np.float64)
    branch_out = mlp_forward(model.branch, leaves, np.asarray(u_rows), prefix="branch.")
    fld = make_deeponet_field(model, branch_out, leaves)
    diff = dk.sub(fld(points[:, :1], points[:, 1:]), np.asarray(targets).ravel())
    return dk.mean_(dk.mul(diff, diff))


def _include_names(model: DeepOnetModel, config: TrainConfig) -> tuple[str, ...]:
    if config.kernel == "ck" or config.trainable == "final":
        return model.final_layer_names()
    return model.params.layout.names


def kernel_diag(model: DeepOnetModel, tset: TrainSet, config: TrainConfig) -> WeightState:
    """Diagonal H_kk = ||grad_theta T_k||^2 over the full pools.

    Terms are processed in chunks; each chunk builds one graph and runs
    one per-sample reverse sweep restricted to the included parameters.
    """
    names = set(_include_names(model, config))
    diag = WeightState(
        ic=np.zeros(tset.pool_size("ic")),
        bc=np.zeros(tset.n_orders * tset.pool_size("bc")),
        interior=np.zeros(tset.pool_size("interior")),
    )
    for role in ROLES:
        pool = tset.pool_size(role)
        out = diag.get(role)
        for start in range(0, pool, config.kernel_chunk):
            idx = np.arange(start, min(start + config.kernel_chunk, pool))
            leaves = model.params.leaves()
            include = [leaves[n] for n in model.params.layout.names if n in names]
            for term, slots in _role_terms(model, tset, leaves, role, idx):
                out[slots] = dk.batch_gradient_sqnorm(term, include)
    return diag


def update_weights(diag: WeightState, alpha: float) -> WeightState:
    """lambda_k = (max_j H_jj / max(H_kk, floor))^alpha.

    A kernel that vanished everywhere leaves the weights at 1 and warns,
    since the ratio would be meaningless.
    """
    top = max(d.max() if d.size else 0.0 for d in (diag.ic, diag.bc, diag.interior))
    if not np.isfinite(top) or top <= 0.0:
        warnings.warn("tangent kernel diagonal is zero everywhere; keeping weights at 1")
        return WeightState(ic=np.ones_like(diag.ic), bc=np.ones_like(diag.bc),
                           interior=np.ones_like(diag.interior))
    def lam(d):
        return (top / np.maximum(d, WEIGHT_FLOOR)) ** alpha
    return WeightState(ic=lam(diag.ic), bc=lam(diag.bc), interior=lam(diag.interior))


@dataclass
class AdamState:
    """First/second moment accumulators plus the update counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    skipped: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n))


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> bool:
    """One in-place Adam update; a nonfinite gradient is skipped."""
    if not np.all(np.isfinite(grad)):
        state.skipped += 1
        return False
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1**state.t)
    v_hat = state.v / (1.0 - beta2**state.t)
    params -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return True


def learning_rate(config: TrainConfig, step: int) -> float:
    """Smooth geometric decay evaluated at fractional exponents."""
    return config.lr * config.decay_rate ** (step / config.decay_every)


@dataclass
class TrainingLog:
    """Loss trace of one run."""

    steps: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    loss_ic: list = field(default_factory=list)
    loss_bc: list = field(default_factory=list)
    loss_interior: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    refresh_steps: list = field(default_factory=list)
    skipped: int = 0
    wall_time: float = 0.0
    kernel_time: float = 0.0

    def append(self, step, total, parts, lr):
        self.steps.append(int(step))
        self.loss.append(float(total))
        self.loss_ic.append(parts["ic"])
        self.loss_bc.append(parts["bc"])
        self.loss_interior.append(parts["interior"])
        self.lr.append(float(lr))

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        rows = np.array([self.steps, self.loss, self.loss_ic, self.loss_bc,
                         self.loss_interior, self.lr]).T
        header = "step,loss,loss_ic,loss_bc,loss_interior,lr"
        np.savetxt(path, rows, fmt="%.17g", delimiter=",", header=header, comments="")
        return path


def train(model: DeepOnetModel, tset: TrainSet, config: TrainConfig) -> TrainingLog:
    """Run the optimization loop in place on ``model``.

    ``config.steps == 0`` is allowed and leaves the parameters untouched,
    which is how a transferred model can be evaluated unchanged through
    the same code path.
    """
    config.validate()
    if model.n_sensors != tset.u.shape[1]:
        raise ShapeError(
            f"model expects {model.n_sensors} sensors, train set has {tset.u.shape[1]}"
        )
    rng = np.random.default_rng(config.seed)
    weights = WeightState.ones(tset)
    adam = AdamState.zeros(model.params.layout.size)
    log = TrainingLog()
    mask = None
    if config.trainable == "final":
        mask = np.zeros(model.params.layout.size, dtype=bool)
        for name in model.final_layer_names():
            off, size, _ = model.params.layout.slot(name)
            mask[off:off + size] = True
    t0 = time.perf_counter()
    for step in range(config.steps):
        if (config.kernel != "none" and config.refresh_every > 0
                and step > 0 and step % config.refresh_every == 0):
            tk = time.perf_counter()
            weights = update_weights(kernel_diag(model, tset, config), config.alpha)
            log.kernel_time += time.perf_counter() - tk
            log.refresh_steps.append(step)
        sel = {
            role: rng.integers(0, tset.pool_size(role),
                               size=min(config.batch, tset.pool_size(role)))
            for role in ROLES
        }
        loss, parts = physics_loss(model, tset, weights, sel)
        grad = dk.param_gradient(loss, model.params)
        if mask is not None:
            grad.data[~mask] = 0.0
        lr = learning_rate(config, step)
        adam_step(adam, model.params.data, grad.data, lr)
        model.step += 1
        if step % config.log_every == 0 or step == config.steps - 1:
            log.append(step, np.asarray(dk.value_of(loss)).ravel()[0], parts, lr)
    log.skipped = adam.skipped
    log.wall_time = time.perf_counter() - t0
    return log


def evaluate_model(model: DeepOnetModel, pde: PdeSpec, grf: GrfSpec,
                   func_seeds, m_eval: int = 256, n_steps: int | None = None,
                   store_stride: int | None = None) -> ErrorReport:
    """Time-averaged relative errors against reference solves.

    Each seed draws one input function, solves the equation on the
    reference grid, and compares the network prediction on the full
    stored space-time lattice.
    """
    grid = sensor_grid(grf)
    errors = []
    for fs in func_seeds:
        f = draw_function(grf, fs)
        ref = solve_reference(pde, f, m=m_eval, n_steps=n_steps,
                              store_stride=store_stride)
        xx, tt = np.meshgrid(ref.x, ref.t)
        pts = np.stack([xx.ravel(), tt.ravel()], axis=1)
        pred = deeponet_eval(model, f(grid), pts).reshape(ref.u.shape)
        errors.append(average_error(error_curve(pred, ref.u), ref.t))
    return ErrorReport.from_errors(errors)
