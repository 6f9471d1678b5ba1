"""Piecewise-linear tanh approximations: construction, evaluation, error."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pwlopt.pwl import PwlFunction, pwl_max_error, tanh_pwl


def segment_peak_error(slope, intercept):
    """Calculus oracle: max |tanh(x) - (slope x + intercept)| on the segment's
    stationary point, where sech^2(x) = slope."""
    x = math.atanh(math.sqrt(1.0 - slope))
    return abs(math.tanh(x) - (slope * x + intercept))


class TestTanhPwl:
    def test_three_piece_table(self):
        f = tanh_pwl(3)
        assert f.breakpoints == (-4.0, -1.0, 1.0, 4.0)
        assert f.values == (-1.0, -0.76, 0.76, 1.0)

    def test_five_piece_table(self):
        f = tanh_pwl(5)
        assert f.breakpoints == (-4.0, -2.0, -1.0, 1.0, 2.0, 4.0)
        # 0.20 * 2 + 0.56 at the inner side of the +-2 breakpoints
        assert f(2.0) == pytest.approx(0.96, abs=1e-15)
        # 0.018 * 4 + 0.93 at the domain edge
        assert f(4.0) == pytest.approx(1.002, abs=1e-15)

    @pytest.mark.parametrize("pieces", [1, 2, 4, 7])
    def test_other_piece_counts_rejected(self, pieces):
        with pytest.raises(ValueError):
            tanh_pwl(pieces)

    def test_values_strictly_increasing(self):
        for pieces in (3, 5):
            assert np.all(np.diff(tanh_pwl(pieces).values) > 0)


class TestEvaluation:
    def test_odd_points(self):
        assert tanh_pwl(3)(0.0) == 0.0
        assert tanh_pwl(3)(1.0) == pytest.approx(0.76)

    def test_five_piece_interpolation(self):
        # midpoint of the canonical outer segment from (2, 0.96) to (4, 1.002)
        assert tanh_pwl(5)(2.5) == pytest.approx(0.9705, abs=1e-12)
        assert tanh_pwl(5)(3.0) == pytest.approx(0.981, abs=1e-12)

    def test_clamps_outside_domain(self):
        f = tanh_pwl(5)
        assert f(10.0) == pytest.approx(1.002)
        assert f(-25.0) == pytest.approx(-1.002)

    def test_vectorized_matches_scalar(self):
        f = tanh_pwl(3)
        xs = np.linspace(-5, 5, 37)
        np.testing.assert_allclose(f(xs), [f(float(x)) for x in xs])

    @given(st.floats(-4, 4), st.sampled_from([3, 5]))
    def test_odd_symmetry(self, x, pieces):
        f = tanh_pwl(pieces)
        assert f(-x) == pytest.approx(-f(x), abs=1e-12)

    def test_continuous_at_breakpoints(self):
        for pieces in (3, 5):
            f = tanh_pwl(pieces)
            for b in f.breakpoints:
                left = f(b - 1e-12)
                right = f(b + 1e-12)
                assert abs(left - right) < 1e-10

    def test_derivative_is_segment_slope(self):
        f = tanh_pwl(3)
        assert f.derivative(0.0) == pytest.approx(0.76)
        assert f.derivative(2.0) == pytest.approx(0.08)
        assert f.derivative(9.0) == 0.0


class TestMaxError:
    def test_three_piece_against_calculus_oracle(self):
        # the outer segment 0.08x + 0.68 carries the peak
        want = segment_peak_error(0.08, 0.68)
        got = pwl_max_error(tanh_pwl(3))
        assert got == pytest.approx(want, abs=1e-6)
        assert got == pytest.approx(0.1240, abs=2e-3)

    def test_five_piece_against_calculus_oracle(self):
        # the inner segment 0.76x carries the peak
        want = segment_peak_error(0.76, 0.0)
        got = pwl_max_error(tanh_pwl(5))
        assert got == pytest.approx(want, abs=1e-6)
        assert got == pytest.approx(0.0826, abs=2e-3)

    def test_five_beats_three(self):
        assert pwl_max_error(tanh_pwl(5)) < pwl_max_error(tanh_pwl(3))

    def test_self_comparison_is_zero(self):
        f = tanh_pwl(3)
        assert pwl_max_error(f, reference=f) == 0.0

    def test_sample_floor(self):
        with pytest.raises(ValueError):
            pwl_max_error(tanh_pwl(3), samples=10)


class TestPwlFunction:
    def test_rejects_nonincreasing_breakpoints(self):
        with pytest.raises(ValueError):
            PwlFunction((0.0, 0.0, 1.0), (0.0, 1.0, 2.0))

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            PwlFunction((0.0, 1.0), (0.0, 1.0, 2.0))

    def test_csv_round_shape(self):
        text = tanh_pwl(3).to_csv_text()
        lines = text.strip().splitlines()
        assert lines[0] == "breakpoint,value"
        assert len(lines) == 5
