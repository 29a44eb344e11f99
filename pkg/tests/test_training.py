"""Tests for loss assembly, kernel-based weighting, Adam, and the
training loop."""

from __future__ import annotations

import numpy as np
import pytest

import opbasis.diffkit as dk
from opbasis.errors import ConfigError, ShapeError
from opbasis.networks import MlpSpec, deeponet_eval, init_model
from opbasis.pde import PdeSpec
from opbasis.sampling import GrfSpec, draw_function, sensor_grid
from opbasis.training import (
    ROLES,
    AdamState,
    TrainConfig,
    WeightState,
    _role_terms,
    adam_step,
    build_train_set,
    data_loss,
    evaluate_model,
    kernel_diag,
    learning_rate,
    physics_loss,
    train,
    update_weights,
)


def tiny_setup(kind="advection_diffusion", seed=0):
    if kind == "advection_diffusion":
        pde = PdeSpec.advection_diffusion()
        grf = GrfSpec.warped(m=16, master_n=32)
    else:
        pde = PdeSpec.kdv()
        grf = GrfSpec.kdv_trig(m=16)
    tset = build_train_set(pde, grf, n_functions=2, n_ic=3, n_bc=3,
                           n_interior=3, seed=seed)
    model = init_model(MlpSpec(16, (10, 10), 8), MlpSpec(2, (10, 10), 8), seed=1)
    return pde, grf, tset, model


def full_selection(tset):
    return {role: np.arange(tset.pool_size(role)) for role in ROLES}


class TestTrainSet:
    def test_shapes_and_domains(self):
        pde, grf, tset, _ = tiny_setup()
        assert tset.u.shape == (2, 16)
        assert tset.ic_x.shape == (2, 3)
        assert tset.int_xt.shape == (2, 3, 2)
        assert np.all((tset.ic_x >= 0) & (tset.ic_x <= pde.x_max))
        assert np.all((tset.bc_t >= 0) & (tset.bc_t <= pde.t_max))
        assert np.all(tset.int_xt[..., 1] <= pde.t_max)

    def test_targets_match_drawn_functions(self):
        _, grf, tset, _ = tiny_setup()
        for i, fs in enumerate(tset.func_seeds):
            f = draw_function(grf, fs)
            np.testing.assert_array_equal(f(tset.ic_x[i]), tset.ic_target[i])
            np.testing.assert_array_equal(f(sensor_grid(grf)), tset.u[i])

    def test_determinism_and_seed_sensitivity(self):
        pde, grf, tset, _ = tiny_setup(seed=5)
        again = build_train_set(pde, grf, 2, 3, 3, 3, seed=5)
        np.testing.assert_array_equal(tset.u, again.u)
        np.testing.assert_array_equal(tset.int_xt, again.int_xt)
        other = build_train_set(pde, grf, 2, 3, 3, 3, seed=6)
        assert np.any(tset.u != other.u)

    def test_term_count(self):
        _, _, tset, _ = tiny_setup()
        # 6 ic + 2 orders * 6 bc + 6 interior
        assert tset.term_count() == 6 + 2 * 6 + 6

    def test_domain_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            build_train_set(PdeSpec.advection_diffusion(),
                            GrfSpec.burgers_benchmark(m=16), 2, 3, 3, 3, seed=0)


class TestPhysicsLoss:
    def test_zero_model_closed_form(self):
        # with all parameters zero the prediction vanishes, so boundary
        # and interior terms are exactly zero and the loss reduces to the
        # weighted IC targets
        _, _, tset, model = tiny_setup()
        model.params.data[:] = 0.0
        ws = WeightState.ones(tset)
        rng = np.random.default_rng(2)
        ws.ic = rng.uniform(0.5, 2.0, ws.ic.size)
        sel = full_selection(tset)
        loss, parts = physics_loss(model, tset, ws, sel)
        n_star = tset.term_count()
        expect = 2.0 / n_star * np.sum(ws.ic * tset.ic_target.ravel() ** 2)
        np.testing.assert_allclose(dk.value_of(loss), expect, rtol=1e-14)
        np.testing.assert_allclose(parts["ic"], expect, rtol=1e-14)
        assert parts["bc"] == 0.0 and parts["interior"] == 0.0

    def test_against_finite_difference_assembly(self):
        # same loss rebuilt with numpy forward passes and finite
        # differences in place of the jet machinery
        pde, grf, tset, model = tiny_setup()
        ws = WeightState.ones(tset)
        rng = np.random.default_rng(3)
        ws.ic = rng.uniform(0.5, 2.0, ws.ic.size)
        ws.bc = rng.uniform(0.5, 2.0, ws.bc.size)
        ws.interior = rng.uniform(0.5, 2.0, ws.interior.size)
        sel = full_selection(tset)
        loss, _ = physics_loss(model, tset, ws, sel)

        def pred(i, x, t):
            pts = np.stack([np.atleast_1d(x), np.atleast_1d(t)], axis=1)
            return deeponet_eval(model, tset.u[i], pts)

        total = 0.0
        h = 1e-4
        for i in range(2):
            for p in range(3):
                x0 = tset.ic_x[i, p]
                term = pred(i, x0, 0.0)[0] - tset.ic_target[i, p]
                total += ws.ic[i * 3 + p] * term**2
        for o in (0, 1):
            for i in range(2):
                for p in range(3):
                    t0 = tset.bc_t[i, p]
                    if o == 0:
                        gap = pred(i, 0.0, t0)[0] - pred(i, pde.x_max, t0)[0]
                    else:
                        gap = ((pred(i, h, t0)[0] - pred(i, -h, t0)[0])
                               - (pred(i, pde.x_max + h, t0)[0]
                                  - pred(i, pde.x_max - h, t0)[0])) / (2 * h)
                    total += ws.bc[o * 6 + i * 3 + p] * gap**2
        for i in range(2):
            for p in range(3):
                x0, t0 = tset.int_xt[i, p]
                s_t = (pred(i, x0, t0 + h)[0] - pred(i, x0, t0 - h)[0]) / (2 * h)
                s_x = (pred(i, x0 + h, t0)[0] - pred(i, x0 - h, t0)[0]) / (2 * h)
                s_xx = (pred(i, x0 + h, t0)[0] - 2 * pred(i, x0, t0)[0]
                        + pred(i, x0 - h, t0)[0]) / h**2
                res = s_t + 4.0 * s_x - 0.01 * s_xx
                total += ws.interior[i * 3 + p] * res**2
        expect = 2.0 / tset.term_count() * total
        np.testing.assert_allclose(dk.value_of(loss), expect, rtol=1e-4)

    def test_gradient_matches_finite_differences(self):
        _, _, tset, model = tiny_setup()
        ws = WeightState.ones(tset)
        sel = full_selection(tset)

        def value():
            loss, _ = physics_loss(model, tset, ws, sel)
            return float(np.asarray(dk.value_of(loss)).ravel()[0])

        loss, _ = physics_loss(model, tset, ws, sel)
        grad = dk.param_gradient(loss, model.params)
        rng = np.random.default_rng(4)
        coords = rng.choice(model.params.layout.size, size=5, replace=False)
        h = 1e-5
        for c in coords:
            keep = model.params.data[c]
            model.params.data[c] = keep + h
            up = value()
            model.params.data[c] = keep - h
            dn = value()
            model.params.data[c] = keep
            np.testing.assert_allclose(grad.data[c], (up - dn) / (2 * h),
                                       rtol=1e-4, atol=1e-8)

    def test_kdv_orders_enter_loss(self):
        # third-gap weighting slot must exist and matter for KdV
        _, _, tset, model = tiny_setup(kind="kdv")
        assert tset.n_orders == 3
        ws = WeightState.ones(tset)
        assert ws.bc.size == 3 * 6
        loss, parts = physics_loss(model, tset, ws, full_selection(tset))
        assert np.isfinite(dk.value_of(loss))
        assert parts["bc"] > 0.0


class TestDataLoss:
    def test_zero_model_mean_square(self):
        _, _, tset, model = tiny_setup()
        model.params.data[:] = 0.0
        pts = np.array([[0.3, 0.1], [1.2, 0.8], [4.0, 0.5]])
        targets = np.array([1.0, -2.0, 3.0])
        val = dk.value_of(data_loss(model, tset.u[[0, 0, 1]], pts, targets))
        np.testing.assert_allclose(val, np.mean(targets**2), rtol=1e-15)

    def test_exact_targets_give_zero(self):
        # the (2, m) batched forward can differ from the broadcast single-row
        # one in the last ulp, so allow squared-roundoff residue
        _, _, tset, model = tiny_setup()
        pts = np.array([[0.3, 0.1], [1.2, 0.8]])
        targets = deeponet_eval(model, tset.u[0], pts)
        val = dk.value_of(data_loss(model, tset.u[[0, 0]], pts, targets))
        assert float(np.asarray(val).ravel()[0]) < 1e-30


class TestKernelDiag:
    def test_matches_looped_gradients(self):
        _, _, tset, model = tiny_setup()
        cfg = TrainConfig(kernel="ntk", kernel_chunk=4)
        diag = kernel_diag(model, tset, cfg)
        names = model.params.layout.names
        for role in ROLES:
            pool = tset.pool_size(role)
            for k in range(pool):
                leaves = model.params.leaves()
                for term, slots in _role_terms(model, tset, leaves, role,
                                               np.array([k])):
                    g = dk.param_gradient(term, model.params)
                    want = sum(float(np.sum(g.view(n) ** 2)) for n in names)
                    np.testing.assert_allclose(diag.get(role)[slots[0]], want,
                                               rtol=1e-12)

    def test_restricted_equals_final_trainable(self):
        _, _, tset, model = tiny_setup()
        ck = kernel_diag(model, tset, TrainConfig(kernel="ck"))
        ntk_final = kernel_diag(model, tset,
                                TrainConfig(kernel="ntk", trainable="final"))
        for role in ROLES:
            np.testing.assert_array_equal(ck.get(role), ntk_final.get(role))

    def test_restricted_bounded_by_full(self):
        _, _, tset, model = tiny_setup()
        full = kernel_diag(model, tset, TrainConfig(kernel="ntk"))
        part = kernel_diag(model, tset, TrainConfig(kernel="ck"))
        for role in ROLES:
            assert np.all(part.get(role) <= full.get(role) * (1 + 1e-12) + 1e-15)

    def test_chunking_invariant(self):
        _, _, tset, model = tiny_setup()
        a = kernel_diag(model, tset, TrainConfig(kernel="ntk", kernel_chunk=2))
        b = kernel_diag(model, tset, TrainConfig(kernel="ntk", kernel_chunk=64))
        for role in ROLES:
            np.testing.assert_allclose(a.get(role), b.get(role), rtol=1e-13)


class TestWeightUpdate:
    def test_hand_values(self):
        diag = WeightState(ic=np.array([4.0, 1.0]), bc=np.array([1e-20]),
                           interior=np.array([0.25]))
        ws = update_weights(diag, alpha=1.0)
        np.testing.assert_allclose(ws.ic, [1.0, 4.0], rtol=1e-15)
        np.testing.assert_allclose(ws.bc, [4.0 / 1e-12], rtol=1e-15)  # floored
        np.testing.assert_allclose(ws.interior, [16.0], rtol=1e-15)

    def test_sqrt_exponent(self):
        diag = WeightState(ic=np.array([4.0]), bc=np.array([1.0]),
                           interior=np.array([0.25]))
        ws = update_weights(diag, alpha=0.5)
        np.testing.assert_allclose(ws.ic, [1.0])
        np.testing.assert_allclose(ws.bc, [2.0])
        np.testing.assert_allclose(ws.interior, [4.0])

    def test_all_zero_warns_and_keeps_ones(self):
        diag = WeightState(ic=np.zeros(2), bc=np.zeros(2), interior=np.zeros(2))
        with pytest.warns(UserWarning):
            ws = update_weights(diag, alpha=1.0)
        np.testing.assert_array_equal(ws.ic, np.ones(2))


class TestAdam:
    def test_first_step_is_signed_lr(self):
        p = np.array([1.0, -2.0, 3.0])
        g = np.array([10.0, -0.5, 2.0])
        st = AdamState.zeros(3)
        adam_step(st, p, g, lr=0.01)
        np.testing.assert_allclose(p, [0.99, -1.99, 2.99], rtol=1e-6)

    def test_trajectory_matches_reference_loop(self):
        # quadratic bowl; a hand-rolled loop with the textbook recursions
        # must coincide step for step
        c = np.array([0.3, -1.2, 0.7, 2.0])
        p = np.zeros(4)
        st = AdamState.zeros(4)
        for _ in range(100):
            adam_step(st, p, p - c, lr=0.05)
        q = np.zeros(4)
        m = np.zeros(4)
        v = np.zeros(4)
        for t in range(1, 101):
            g = q - c
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            q -= 0.05 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(p, q, rtol=1e-12)
        assert np.linalg.norm(p - c) < np.linalg.norm(c)

    def test_nonfinite_gradient_skipped(self):
        p = np.ones(3)
        st = AdamState.zeros(3)
        ok = adam_step(st, p, np.array([1.0, np.nan, 0.0]), lr=0.1)
        assert not ok
        assert st.skipped == 1 and st.t == 0
        np.testing.assert_array_equal(p, np.ones(3))

    def test_learning_rate_schedule(self):
        cfg = TrainConfig(lr=1e-3, decay_rate=0.9, decay_every=2000.0)
        assert learning_rate(cfg, 0) == 1e-3
        np.testing.assert_allclose(learning_rate(cfg, 2000), 9e-4, rtol=1e-15)
        np.testing.assert_allclose(learning_rate(cfg, 1000), 1e-3 * 0.9**0.5,
                                   rtol=1e-15)


class TestTrainLoop:
    def test_loss_decreases(self):
        pde = PdeSpec.advection_diffusion()
        grf = GrfSpec.warped(m=32, master_n=64)
        tset = build_train_set(pde, grf, 4, 12, 12, 12, seed=0)
        model = init_model(MlpSpec(32, (24, 24), 12), MlpSpec(2, (24, 24), 12), seed=1)
        log = train(model, tset, TrainConfig(steps=300, batch=48, kernel="none",
                                             seed=3, log_every=50))
        assert log.loss[-1] < 0.2 * log.loss[0]
        assert log.skipped == 0

    def test_deterministic_repeat(self):
        pde = PdeSpec.advection_diffusion()
        grf = GrfSpec.warped(m=16, master_n=32)
        tset = build_train_set(pde, grf, 2, 4, 4, 4, seed=0)
        cfg = TrainConfig(steps=30, batch=8, kernel="ntk", refresh_every=10, seed=3)
        m1 = init_model(MlpSpec(16, (10, 10), 8), MlpSpec(2, (10, 10), 8), seed=1)
        m2 = init_model(MlpSpec(16, (10, 10), 8), MlpSpec(2, (10, 10), 8), seed=1)
        log1 = train(m1, tset, cfg)
        log2 = train(m2, tset, cfg)
        np.testing.assert_array_equal(m1.params.data, m2.params.data)
        assert log1.loss == log2.loss
        assert log1.refresh_steps == log2.refresh_steps == [10, 20]

    def test_zero_steps_is_identity(self):
        _, _, tset, model = tiny_setup()
        before = model.params.data.copy()
        log = train(model, tset, TrainConfig(steps=0))
        np.testing.assert_array_equal(model.params.data, before)
        assert log.steps == []

    def test_final_only_training_freezes_hidden_layers(self):
        _, _, tset, model = tiny_setup()
        before = model.params.copy()
        train(model, tset, TrainConfig(steps=20, batch=8, kernel="none",
                                       trainable="final", seed=2))
        final = set(model.final_layer_names())
        for name in model.params.layout.names:
            same = np.array_equal(model.params.view(name), before.view(name))
            assert same != (name in final)

    def test_weighting_changes_trajectory(self):
        pde = PdeSpec.advection_diffusion()
        grf = GrfSpec.warped(m=16, master_n=32)
        tset = build_train_set(pde, grf, 2, 4, 4, 4, seed=0)
        runs = {}
        for kernel in ("none", "ntk"):
            model = init_model(MlpSpec(16, (10, 10), 8), MlpSpec(2, (10, 10), 8),
                               seed=1)
            train(model, tset, TrainConfig(steps=30, batch=8, kernel=kernel,
                                           refresh_every=10, seed=3))
            runs[kernel] = model.params.data.copy()
        assert np.any(runs["none"] != runs["ntk"])

    def test_sensor_mismatch_rejected(self):
        _, _, tset, _ = tiny_setup()
        model = init_model(MlpSpec(24, (10,), 8), MlpSpec(2, (10,), 8), seed=1)
        with pytest.raises(ShapeError):
            train(model, tset, TrainConfig(steps=1))

    def test_log_roundtrip(self, tmp_path):
        _, _, tset, model = tiny_setup()
        log = train(model, tset, TrainConfig(steps=10, batch=8, kernel="none",
                                             log_every=5))
        path = log.save(tmp_path / "trace.csv")
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        assert rows.shape[1] == 6
        np.testing.assert_allclose(rows[:, 1], log.loss, rtol=1e-15)


class TestEvaluate:
    def test_zero_model_scores_unit_error(self):
        pde = PdeSpec.advection_diffusion()
        grf = GrfSpec.warped(m=16, master_n=32)
        model = init_model(MlpSpec(16, (10, 10), 8), MlpSpec(2, (10, 10), 8), seed=1)
        model.params.data[:] = 0.0
        rep = evaluate_model(model, pde, grf, func_seeds=[11, 12], m_eval=32,
                             n_steps=100, store_stride=25)
        np.testing.assert_allclose(rep.per_function, 1.0, rtol=1e-12)
        assert rep.mean == pytest.approx(1.0)
        assert rep.std == pytest.approx(0.0, abs=1e-12)

    def test_finite_for_random_model(self):
        pde = PdeSpec.advection_diffusion()
        grf = GrfSpec.warped(m=16, master_n=32)
        model = init_model(MlpSpec(16, (10, 10), 8), MlpSpec(2, (10, 10), 8), seed=1)
        rep = evaluate_model(model, pde, grf, func_seeds=[3], m_eval=32,
                             n_steps=100, store_stride=25)
        assert np.all(np.isfinite(rep.per_function))
