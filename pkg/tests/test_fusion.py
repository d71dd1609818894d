import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2

from cropspray.fusion import (
    GATE_CHI2_1DOF,
    GATE_CHI2_2DOF,
    GpsFix,
    HeadingFix,
    StateEstimate,
    motion_jacobian,
    nees,
    predict,
    slip_noise,
    travel_scaled_noise,
    update_gps,
    update_heading,
    wheel_jacobian,
)
from cropspray.odometry import Pose2D, WheelIncrement, propagate, wrap_angle

W = 0.5


def _fd_jacobian(fn, x0: np.ndarray, step: float = 1e-6) -> np.ndarray:
    cols = []
    for i in range(len(x0)):
        dx = np.zeros_like(x0)
        dx[i] = step
        hi, lo = fn(x0 + dx), fn(x0 - dx)
        diff = hi - lo
        if len(diff) == 3:
            diff[2] = wrap_angle(diff[2])
        cols.append(diff / (2 * step))
    return np.column_stack(cols)


def _state_fn(inc):
    return lambda v: propagate(Pose2D(*v), inc).as_array()


def test_gate_constants():
    assert GATE_CHI2_2DOF == pytest.approx(chi2.ppf(0.999, 2), rel=1e-12)
    assert GATE_CHI2_1DOF == pytest.approx(chi2.ppf(0.999, 1), rel=1e-12)


class TestPredict:
    def test_zero_increment_is_identity(self):
        s = StateEstimate(Pose2D(1.0, 2.0, 0.3), np.diag([0.1, 0.2, 0.3]))
        out = predict(s, WheelIncrement(0.0, 0.0, W), np.zeros((3, 3)))
        assert out.mean == s.mean
        assert np.array_equal(out.covariance, s.covariance)

    def test_straight_jacobian(self):
        inc = WheelIncrement(1.0, 1.0, W)
        f = motion_jacobian(0.0, inc)
        assert f == pytest.approx(np.array([[1, 0, 0], [0, 1, 1], [0, 0, 1]]), abs=1e-12)
        assert _fd_jacobian(_state_fn(inc), np.zeros(3)) == pytest.approx(f, abs=1e-6)

    @pytest.mark.parametrize("theta", [0.0, 0.7, -2.5, 3.1])
    @pytest.mark.parametrize("l, r", [(0.01, 0.012), (0.3, -0.1), (0.004, 0.004)])
    def test_jacobian_matches_finite_difference(self, theta, l, r):
        inc = WheelIncrement(l, r, W)
        f = motion_jacobian(theta, inc)
        assert _fd_jacobian(_state_fn(inc), np.array([0.5, -1.0, theta])) == pytest.approx(f, abs=1e-6)

    @pytest.mark.parametrize("l, r", [(0.01, 0.012), (0.3, -0.1), (0.004, 0.004), (0.0, 0.0)])
    def test_wheel_jacobian_matches_finite_difference(self, l, r):
        theta = 0.4

        def fn(v):
            out = propagate(Pose2D(0, 0, theta), WheelIncrement(v[0], v[1], W))
            return np.array([out.x_m, out.y_m, wrap_angle(out.theta_rad - theta)])

        assert _fd_jacobian(fn, np.array([l, r])) == pytest.approx(wheel_jacobian(theta, WheelIncrement(l, r, W)), abs=1e-6)

    def test_trace_increases(self):
        s = StateEstimate.from_std(Pose2D(0, 0, 0), 0.1, 0.05)
        inc = WheelIncrement(0.004, 0.0042, W)
        out = predict(s, inc, travel_scaled_noise(inc, 0.02, 0.05))
        assert np.trace(out.covariance) > np.trace(s.covariance)

    def test_slip_noise_matches_sampled_slip(self):
        rng = np.random.default_rng(7)
        inc = WheelIncrement(0.004, 0.005, W)
        theta, sigma = 0.3, 0.02
        base = propagate(Pose2D(0, 0, theta), inc).as_array()
        samples = []
        for e in rng.normal(0.0, sigma, (20000, 2)):
            p = propagate(Pose2D(0, 0, theta), WheelIncrement(inc.left_m * (1 + e[0]), inc.right_m * (1 + e[1]), W))
            samples.append(p.as_array() - base)
        emp = np.cov(np.array(samples).T)
        q = slip_noise(theta, inc, sigma)
        assert np.diag(emp) == pytest.approx(np.diag(q), rel=0.05)


class TestGpsUpdate:
    def test_zero_innovation(self):
        s = StateEstimate.from_std(Pose2D(1.0, 2.0, 0.0), 0.5, 0.1)
        res = update_gps(s, GpsFix(1.0, 2.0, 0.1))
        assert res.accepted
        assert res.estimate.mean == s.mean
        assert np.trace(res.estimate.covariance) < np.trace(s.covariance)

    def test_scalar_gain(self):
        s = StateEstimate(Pose2D(0, 0, 0), np.eye(3))
        res = update_gps(s, GpsFix(1.0, 0.0, 0.01))
        assert res.estimate.mean.x_m == pytest.approx(1.0 / (1.0 + 1e-4), abs=1e-12)
        assert res.estimate.mean.x_m == pytest.approx(0.9999, abs=1e-3)

    def test_outlier_gated(self):
        s = StateEstimate.from_std(Pose2D(0, 0, 0), 0.1, 0.01)
        res = update_gps(s, GpsFix(10.0, 0.0, 0.01))
        assert not res.accepted
        assert res.nis > 100 * 0.99
        assert res.estimate is s

    def test_posterior_below_prior(self):
        s = StateEstimate(Pose2D(0, 0, 0), np.array([[0.3, 0.1, 0.02], [0.1, 0.2, -0.01], [0.02, -0.01, 0.05]]))
        res = update_gps(s, GpsFix(0.2, -0.1, 0.05))
        assert np.linalg.eigvalsh(s.covariance - res.estimate.covariance).min() >= -1e-9


class TestHeadingUpdate:
    def test_unchanged_on_agreement(self):
        s = StateEstimate.from_std(Pose2D(0, 0, 1.0), 0.1, 0.1)
        assert update_heading(s, HeadingFix(1.0, 0.01)).estimate.mean == s.mean

    def test_wrap_around_innovation(self):
        s = StateEstimate(Pose2D(0, 0, 3.1), np.diag([1.0, 1.0, 0.01]))
        res = update_heading(s, HeadingFix(-3.1, 0.01))
        assert res.accepted
        step = wrap_angle(res.estimate.mean.theta_rad - 3.1)
        assert 0 < step < 0.0832
        # Gain 0.01/0.0101 applied to the short-arc innovation 2*pi - 6.2.
        assert step == pytest.approx((2 * math.pi - 6.2) * 0.01 / 0.0101, abs=1e-12)

    def test_gated(self):
        s = StateEstimate.from_std(Pose2D(0, 0, 0), 0.1, 0.01)
        assert not update_heading(s, HeadingFix(1.0, 0.01)).accepted

    def test_scalar_kalman_oracle(self):
        rng = np.random.default_rng(0)
        p0, r, n, trials = 0.04, 0.01, 10, 1000
        oracle = 1.0 / (1.0 / p0 + n / r)
        errors = []
        for _ in range(trials):
            truth = rng.normal(0.0, math.sqrt(p0))
            s = StateEstimate(Pose2D(0, 0, 0), np.diag([1.0, 1.0, p0]))
            for z in truth + rng.normal(0.0, math.sqrt(r), n):
                s = update_heading(s, HeadingFix(z, math.sqrt(r))).estimate
            errors.append(s.mean.theta_rad - truth)
        assert s.covariance[2, 2] == pytest.approx(oracle, rel=1e-9)
        assert np.var(errors) == pytest.approx(oracle, rel=0.05)


def test_update_order_robustness():
    s = StateEstimate(Pose2D(0.1, 0.2, 0.3), np.array([[0.04, 0.01, 0.005], [0.01, 0.03, -0.004], [0.005, -0.004, 0.02]]))
    gps, hdg = GpsFix(0.15, 0.18, 0.05), HeadingFix(0.35, 0.02)
    a = update_heading(update_gps(s, gps).estimate, hdg).estimate
    b = update_gps(update_heading(s, hdg).estimate, gps).estimate
    assert a.mean.as_array() == pytest.approx(b.mean.as_array(), abs=1e-6)


def test_nees_value():
    s = StateEstimate(Pose2D(0, 0, 0), np.diag([0.04, 0.01, 0.25]))
    assert nees(Pose2D(0.2, 0.1, 0.5), s) == pytest.approx(1 + 1 + 1, rel=1e-12)


def test_nees_matches_solve():
    cov = np.array([[0.04, 0.01, 0.005], [0.01, 0.03, -0.004], [0.005, -0.004, 0.02]])
    s = StateEstimate(Pose2D(0, 0, 0), cov)
    e = np.array([0.1, -0.2, 0.05])
    assert nees(Pose2D(*e), s) == pytest.approx(float(e @ np.linalg.solve(cov, e)), rel=1e-12)


def test_covariance_cleaned_on_construction():
    s = StateEstimate(Pose2D(0, 0, 0), np.array([[1.0, 0.0, 0.0], [1e-13, 1.0, 0.0], [0.0, 0.0, -1e-14]]))
    c = s.covariance
    assert np.array_equal(c, c.T)
    assert np.linalg.eigvalsh(c).min() >= -1e-12
    with pytest.raises(ValueError):
        c[0, 0] = 5.0


op = st.one_of(
    st.tuples(st.just("predict"), st.floats(-0.02, 0.02), st.floats(-0.02, 0.02)),
    st.tuples(st.just("gps"), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5)),
    st.tuples(st.just("heading"), st.floats(-math.pi, math.pi), st.just(0.0)),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(op, min_size=1, max_size=60))
def test_covariance_stays_symmetric_psd(ops):
    s = StateEstimate.from_std(Pose2D(0, 0, 0), 0.05, 0.05)
    for kind, a, b in ops:
        if kind == "predict":
            inc = WheelIncrement(a, b, W)
            s = predict(s, inc, slip_noise(s.mean.theta_rad, inc, 0.02))
        elif kind == "gps":
            s = update_gps(s, GpsFix(s.mean.x_m + a, s.mean.y_m + b, 0.045)).estimate
        else:
            s = update_heading(s, HeadingFix(a, 0.01)).estimate
        c = s.covariance
        assert np.abs(c - c.T).max() <= 1e-12
        assert np.linalg.eigvalsh(c).min() >= -1e-12
