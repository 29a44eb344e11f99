"""Tests for Galerkin evolution in an extracted basis.

The workhorse fixture is the two-function trigonometric basis
phi = (sin x / sqrt(pi), cos x / sqrt(pi)).  Products of two first
harmonics contain only the zeroth and second, so for Burgers and KdV
the quadratic term projects to zero and every right-hand side below has
a closed form.
"""

from __future__ import annotations

import numpy as np
import pytest

from opbasis.basis import extract_basis, gauss_rule, legendre_project
from opbasis.errors import ConfigError, ShapeError, SolverBlowupError
from opbasis.pde import PdeSpec
from opbasis.spectral import (
    CoefficientPath,
    GalerkinSystem,
    evolve,
    init_coeffs,
    load_coeffs,
    reconstruct,
    save_coeffs,
)

TWO_PI = 2.0 * np.pi


def trig_expansion(degree=60):
    # amplitudes 2 and 1 keep the singular values separated so the modes
    # come out in a fixed order with fixed signs
    rule = gauss_rule(512, TWO_PI)
    tau = np.stack([2.0 * np.sin(rule.x), np.cos(rule.x)], axis=1)
    return legendre_project(extract_basis(tau, rule), degree=degree)


class TestRightHandSides:
    def test_advdiff_matrix(self):
        # a1' = -nu a1 + alpha a2, a2' = -alpha a1 - nu a2
        sys = GalerkinSystem.build(trig_expansion(), PdeSpec.advection_diffusion())
        a = np.array([0.7, -0.3])
        expect = np.array([[-0.01, 4.0], [-4.0, -0.01]]) @ a
        np.testing.assert_allclose(sys.rhs(a), expect, atol=1e-7)

    def test_burgers_quadratic_term_projects_out(self):
        # sin*cos products live in the second harmonic, orthogonal to the
        # basis, so only the viscous decay survives
        sys = GalerkinSystem.build(trig_expansion(), PdeSpec.burgers(nu=0.1))
        a = np.array([0.7, -0.3])
        np.testing.assert_allclose(sys.rhs(a), -0.1 * a, atol=1e-7)

    def test_kdv_dispersion_rotation(self):
        # third derivatives rotate the pair: a1' = -delta^2 a2,
        # a2' = +delta^2 a1
        sys = GalerkinSystem.build(trig_expansion(), PdeSpec.kdv(delta=0.1))
        a = np.array([0.7, -0.3])
        np.testing.assert_allclose(sys.rhs(a), [0.01 * 0.3, 0.01 * 0.7], atol=1e-7)

    def test_zero_state_is_fixed_point(self):
        for spec in (PdeSpec.advection_diffusion(), PdeSpec.burgers(nu=0.1),
                     PdeSpec.kdv()):
            sys = GalerkinSystem.build(trig_expansion(), spec)
            np.testing.assert_array_equal(sys.rhs(np.zeros(2)), np.zeros(2))


class TestEvolution:
    def test_advdiff_closed_form(self):
        # the coefficient pair decays at rate nu while rotating at rate
        # alpha: a(t) = e^{-nu t} R(alpha t) a0
        spec = PdeSpec.advection_diffusion()
        sys = GalerkinSystem.build(trig_expansion(), spec)
        a0 = np.array([0.7, -0.3])
        path = evolve(sys, a0, n_steps=2000)
        th = 4.0 * path.t
        rot = np.stack([
            np.cos(th) * a0[0] + np.sin(th) * a0[1],
            -np.sin(th) * a0[0] + np.cos(th) * a0[1],
        ], axis=1)
        exact = np.exp(-0.01 * path.t)[:, None] * rot
        np.testing.assert_allclose(path.a, exact, atol=1e-7)

    def test_rk4_fourth_order(self):
        # rotation at rate 4 keeps the step error well above roundoff, so
        # halving dt shrinks the defect by ~2^4
        spec = PdeSpec.advection_diffusion()
        sys = GalerkinSystem.build(trig_expansion(), spec)
        a0 = np.array([1.1, 0.4])
        finals = [evolve(sys, a0, n_steps=n, store_stride=n).a[-1]
                  for n in (50, 100, 200)]
        ratio = np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2])
        assert 12.0 < ratio < 20.0

    def test_superposition_for_linear_dynamics(self):
        sys = GalerkinSystem.build(trig_expansion(), PdeSpec.advection_diffusion())
        a0 = np.array([0.5, 0.1])
        b0 = np.array([-0.2, 0.9])
        pa = evolve(sys, a0, n_steps=200).a
        pb = evolve(sys, b0, n_steps=200).a
        pab = evolve(sys, a0 + b0, n_steps=200).a
        np.testing.assert_allclose(pab, pa + pb, atol=1e-12)

    def test_constant_mode_preserved(self):
        # with the constant function in the span, Burgers conserves the
        # mean: both the flux and the viscous term integrate to zero
        rule = gauss_rule(512, TWO_PI)
        tau = np.stack([3.0 * np.ones(512), np.sin(rule.x)], axis=1)
        exp = legendre_project(extract_basis(tau, rule), degree=60)
        sys = GalerkinSystem.build(exp, PdeSpec.burgers(nu=0.1))
        path = evolve(sys, np.array([0.8, 1.2]), n_steps=500)
        drift = np.max(np.abs(path.a[:, 0] - path.a[0, 0]))
        assert drift < 1e-8

    def test_initial_projection_reconstructs(self):
        sys = GalerkinSystem.build(trig_expansion(), PdeSpec.advection_diffusion())
        def u(x):
            return 0.4 * np.sin(x) + 1.1 * np.cos(x)
        a0 = init_coeffs(sys, u)
        xs = np.linspace(0.3, 5.9, 17)
        np.testing.assert_allclose(reconstruct(sys.expansion, a0, xs)[0], u(xs),
                                   atol=1e-9)

    def test_blowup_detected(self):
        spec = PdeSpec.advection_diffusion(alpha=400.0, nu=0.0)
        sys = GalerkinSystem.build(trig_expansion(), spec)
        with pytest.raises(SolverBlowupError) as err:
            evolve(sys, np.array([1.0, 0.0]), n_steps=10, store_stride=1)
        assert err.value.step is not None
        assert err.value.time is not None and err.value.time > 0.0

    def test_snapshot_layout(self):
        sys = GalerkinSystem.build(trig_expansion(), PdeSpec.advection_diffusion())
        path = evolve(sys, np.array([1.0, 0.0]), n_steps=400, store_stride=40)
        assert path.a.shape == (11, 2)
        assert path.t[0] == 0.0
        np.testing.assert_allclose(path.t[-1], 1.0, rtol=1e-15)


class TestInterface:
    def test_domain_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            GalerkinSystem.build(trig_expansion(), PdeSpec.burgers(nu=0.1, x_max=1.0))

    def test_wrong_coefficient_count_rejected(self):
        sys = GalerkinSystem.build(trig_expansion(), PdeSpec.advection_diffusion())
        with pytest.raises(ShapeError):
            evolve(sys, np.zeros(3), n_steps=10)
        with pytest.raises(ShapeError):
            init_coeffs(sys, np.zeros(7))

    def test_save_load_roundtrip(self, tmp_path):
        spec = PdeSpec.advection_diffusion()
        sys = GalerkinSystem.build(trig_expansion(), spec)
        path = evolve(sys, np.array([0.7, -0.3]), n_steps=100, store_stride=10)
        man = save_coeffs(tmp_path, "modes", spec, path)
        spec2, path2 = load_coeffs(man)
        assert spec2 == spec
        np.testing.assert_array_equal(path2.a, path.a)
        np.testing.assert_allclose(path2.t, path.t, rtol=1e-15)
