"""EKF over the planar pose (x, y, theta) fusing odometry, GPS position and IMU heading."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .odometry import Pose2D, WheelIncrement, displacement, heading_delta, wrap_angle

# chi-square 0.999 quantiles: -2 ln(0.001) for 2 dof, (Phi^-1(0.9995))^2 for 1 dof
GATE_CHI2_2DOF = 13.815510557964274
GATE_CHI2_1DOF = 10.827566170662733

_H_GPS = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
_I3 = np.eye(3)


def _leading_minors_positive(m: list[list[float]]) -> bool:
    (a, b, c), (_, d, e), (_, _, f) = m
    return a > 0.0 and a * d - b * b > 0.0 and a * (d * f - e * e) - b * (b * f - c * e) + c * (b * e - c * d) > 0.0


def _clean(cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    if not _leading_minors_positive(cov.tolist()):
        # Singular or slightly indefinite: clamp negative eigenvalues.
        w, v = np.linalg.eigh(cov)
        if w[0] < 0.0:
            cov = (v * np.maximum(w, 0.0)) @ v.T
            cov = 0.5 * (cov + cov.T)
    cov.flags.writeable = False
    return cov


def _inv_quadratic(m: list[list[float]], v: tuple[float, float, float]) -> float:
    """v^T m^-1 v for a symmetric positive-definite 3x3 ``m``, via its Cholesky factor."""
    (a, b, c), (_, d, e), (_, _, f) = m
    l11 = math.sqrt(a)
    l21 = b / l11
    l31 = c / l11
    l22 = math.sqrt(d - l21 * l21)
    l32 = (e - l31 * l21) / l22
    l33 = math.sqrt(f - l31 * l31 - l32 * l32)
    y1 = v[0] / l11
    y2 = (v[1] - l21 * y1) / l22
    y3 = (v[2] - l31 * y1 - l32 * y2) / l33
    return y1 * y1 + y2 * y2 + y3 * y3


@dataclass(frozen=True)
class StateEstimate:
    mean: Pose2D
    covariance: np.ndarray

    def __post_init__(self):
        cov = np.array(self.covariance, dtype=float)
        if cov.shape != (3, 3):
            raise ValueError(f"covariance must be 3x3, got {cov.shape}")
        object.__setattr__(self, "covariance", _clean(cov))

    @classmethod
    def from_std(cls, mean: Pose2D, std_xy_m: float, std_theta_rad: float) -> StateEstimate:
        return cls(mean, np.diag([std_xy_m**2, std_xy_m**2, std_theta_rad**2]))


@dataclass(frozen=True)
class GpsFix:
    east_m: float
    north_m: float
    noise_std_m: float
    timestamp_s: float = 0.0

    def __post_init__(self):
        if self.noise_std_m <= 0:
            raise ValueError("GPS noise std must be positive")


@dataclass(frozen=True)
class HeadingFix:
    theta_rad: float
    noise_std_rad: float
    timestamp_s: float = 0.0

    def __post_init__(self):
        if self.noise_std_rad <= 0:
            raise ValueError("heading noise std must be positive")
        object.__setattr__(self, "theta_rad", wrap_angle(self.theta_rad))


class UpdateResult(NamedTuple):
    estimate: StateEstimate
    accepted: bool
    nis: float


def motion_jacobian(theta: float, inc: WheelIncrement) -> np.ndarray:
    """d propagate / d(x, y, theta)."""
    dx, dy, _ = displacement(theta, inc)
    return np.array([[1.0, 0.0, -dy], [0.0, 1.0, dx], [0.0, 0.0, 1.0]])


def travel_scaled_noise(inc: WheelIncrement, sigma_xy: float, sigma_theta: float) -> np.ndarray:
    """Diagonal process noise growing with the distance covered this tick."""
    s2 = inc.mean_m**2
    return np.diag([sigma_xy**2 * s2, sigma_xy**2 * s2, sigma_theta**2 * s2])


def wheel_jacobian(theta: float, inc: WheelIncrement) -> np.ndarray:
    """d(dx, dy, dtheta) / d(left, right), a 3x2 matrix."""
    w = inc.track_width_m
    d = heading_delta(inc)
    travel = inc.mean_m
    half = 0.5 * d
    if abs(half) < 1e-4:
        sinc = 1.0 - half * half / 6.0
        dsinc = -d / 12.0
    else:
        sinc = math.sin(half) / half
        dsinc = 0.5 * (half * math.cos(half) - math.sin(half)) / (half * half)
    c, s = math.cos(theta + half), math.sin(theta + half)
    ddx_dd = travel * (dsinc * c - 0.5 * sinc * s)
    ddy_dd = travel * (dsinc * s + 0.5 * sinc * c)
    return np.array(
        [
            [0.5 * sinc * c - ddx_dd / w, 0.5 * sinc * c + ddx_dd / w],
            [0.5 * sinc * s - ddy_dd / w, 0.5 * sinc * s + ddy_dd / w],
            [-1.0 / w, 1.0 / w],
        ]
    )


def slip_noise(theta: float, inc: WheelIncrement, slip_std: float) -> np.ndarray:
    """Process noise for multiplicative per-wheel slip, mapped through the motion model."""
    g = wheel_jacobian(theta, inc)
    var = np.array([(slip_std * inc.left_m) ** 2, (slip_std * inc.right_m) ** 2])
    return (g * var) @ g.T


def predict(s: StateEstimate, inc: WheelIncrement, q: np.ndarray) -> StateEstimate:
    theta = s.mean.theta_rad
    dx, dy, d = displacement(theta, inc)
    f = np.array([[1.0, 0.0, -dy], [0.0, 1.0, dx], [0.0, 0.0, 1.0]])
    mean = Pose2D(s.mean.x_m + dx, s.mean.y_m + dy, theta + d)
    return StateEstimate(mean, f @ s.covariance @ f.T + q)


def _apply(s: StateEstimate, h: np.ndarray, innovation: np.ndarray, r: np.ndarray, gate: float) -> UpdateResult:
    p = s.covariance
    ph = p @ h.T
    s_inv = np.linalg.inv(h @ ph + r)
    nis = float(innovation @ s_inv @ innovation)
    if nis > gate:
        return UpdateResult(s, False, nis)
    k = ph @ s_inv
    dx, dy, dth = k @ innovation
    mean = Pose2D(s.mean.x_m + dx, s.mean.y_m + dy, s.mean.theta_rad + dth)
    # Joseph form keeps the posterior symmetric PSD.
    a = _I3 - k @ h
    return UpdateResult(StateEstimate(mean, a @ p @ a.T + k @ r @ k.T), True, nis)


def update_gps(s: StateEstimate, fix: GpsFix) -> UpdateResult:
    innovation = np.array([fix.east_m - s.mean.x_m, fix.north_m - s.mean.y_m])
    r = np.eye(2) * fix.noise_std_m**2
    return _apply(s, _H_GPS, innovation, r, GATE_CHI2_2DOF)


def update_heading(s: StateEstimate, fix: HeadingFix) -> UpdateResult:
    # Scalar measurement: same algebra as _apply without the matrix inverse.
    p = s.covariance
    r = fix.noise_std_rad**2
    innovation = wrap_angle(fix.theta_rad - s.mean.theta_rad)
    var = p[2, 2] + r
    nis = innovation * innovation / var
    if nis > GATE_CHI2_1DOF:
        return UpdateResult(s, False, nis)
    k = p[:, 2] / var
    dx, dy, dth = k * innovation
    mean = Pose2D(s.mean.x_m + dx, s.mean.y_m + dy, s.mean.theta_rad + dth)
    a = _I3.copy()
    a[:, 2] -= k
    return UpdateResult(StateEstimate(mean, a @ p @ a.T + r * np.outer(k, k)), True, nis)


def nees(truth: Pose2D, s: StateEstimate) -> float:
    """Normalized estimation error squared of ``s`` against the true pose."""
    err = (
        truth.x_m - s.mean.x_m,
        truth.y_m - s.mean.y_m,
        wrap_angle(truth.theta_rad - s.mean.theta_rad),
    )
    return _inv_quadratic(s.covariance.tolist(), err)
