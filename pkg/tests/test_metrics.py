"""Tests for the error measures."""

from __future__ import annotations

import numpy as np
import pytest

from opbasis.errors import ShapeError
from opbasis.metrics import (
    ErrorReport,
    aggregate,
    average_error,
    error_curve,
    relative_l2,
)


class TestRelativeL2:
    def test_hand_value(self):
        # ||(1,1)|| / ||(3,4)|| = sqrt(2)/5
        val = relative_l2(np.array([4.0, 5.0]), np.array([3.0, 4.0]))
        np.testing.assert_allclose(val, np.sqrt(2.0) / 5.0, rtol=1e-15)

    def test_exact_match_is_zero(self):
        x = np.linspace(0.0, 1.0, 7)
        assert relative_l2(x, x) == 0.0

    def test_zero_reference(self):
        assert relative_l2(np.ones(3), np.zeros(3)) == np.inf
        assert relative_l2(np.zeros(3), np.zeros(3)) == 0.0

    def test_rowwise(self):
        pred = np.array([[1.0, 0.0], [0.0, 2.0]])
        ref = np.array([[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(relative_l2(pred, ref, axis=1), [0.0, 1.0],
                                   rtol=1e-15)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            relative_l2(np.ones(3), np.ones(4))


class TestCurveAndAverage:
    def test_error_curve_rows(self):
        ref = np.stack([np.sin(np.linspace(0, 2 * np.pi, 32, endpoint=False))] * 3)
        pred = ref.copy()
        pred[1] *= 1.1
        curve = error_curve(pred, ref)
        np.testing.assert_allclose(curve, [0.0, 0.1, 0.0], atol=1e-14)

    def test_linear_curve_average(self):
        t = np.linspace(0.0, 1.0, 101)
        assert average_error(t.copy(), t) == pytest.approx(0.5, rel=1e-14)

    def test_quadratic_curve_euler_maclaurin(self):
        # trapezoid of t^2 on a uniform grid is 1/3 + h^2/6 exactly
        t = np.linspace(0.0, 1.0, 101)
        h = t[1] - t[0]
        val = average_error(t**2, t)
        np.testing.assert_allclose(val, 1.0 / 3.0 + h**2 / 6.0, rtol=1e-13)

    def test_nonuniform_times(self):
        t = np.array([0.0, 0.5, 2.0])
        curve = np.array([1.0, 2.0, 4.0])
        # piecewise trapezoid: (0.5*1.5 + 1.5*3) / 2
        np.testing.assert_allclose(average_error(curve, t), 5.25 / 2.0, rtol=1e-15)

    def test_degenerate_span_rejected(self):
        with pytest.raises(ShapeError):
            average_error(np.ones(3), np.zeros(3))


class TestAggregate:
    def test_population_std(self):
        m, s = aggregate([1.0, 2.0, 3.0])
        assert m == pytest.approx(2.0)
        assert s == pytest.approx(np.sqrt(2.0 / 3.0), rel=1e-14)

    def test_report_format(self):
        rep = ErrorReport.from_errors([0.01, 0.03])
        assert rep.mean == pytest.approx(0.02)
        assert rep.as_percent() == "2.00% +/- 1.00%"
