"""Arc-based differential-drive dead reckoning."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Below this per-tick heading change the straight-line limit is used.
EPS_STRAIGHT = 1e-9


def wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    if w == -math.pi:
        return math.pi
    return w


@dataclass(frozen=True)
class Pose2D:
    x_m: float
    y_m: float
    theta_rad: float

    def __post_init__(self):
        object.__setattr__(self, "theta_rad", wrap_angle(self.theta_rad))

    def as_array(self) -> np.ndarray:
        return np.array([self.x_m, self.y_m, self.theta_rad])


@dataclass(frozen=True)
class WheelIncrement:
    """Signed wheel travel over one tick."""

    left_m: float
    right_m: float
    track_width_m: float

    def __post_init__(self):
        if self.track_width_m <= 0:
            raise ValueError("track width must be positive")

    @property
    def mean_m(self) -> float:
        return 0.5 * (self.left_m + self.right_m)


class EncoderGlitchError(ValueError):
    pass


def check_increment(inc: WheelIncrement, max_speed_mps: float, dt_s: float) -> WheelIncrement:
    """Reject increments no wheel could physically travel within one tick."""
    limit = max_speed_mps * dt_s
    if abs(inc.left_m) > limit or abs(inc.right_m) > limit:
        raise EncoderGlitchError(
            f"wheel travel ({inc.left_m:.4g}, {inc.right_m:.4g}) m exceeds {limit:.4g} m per tick"
        )
    return inc


def heading_delta(inc: WheelIncrement) -> float:
    return (inc.right_m - inc.left_m) / inc.track_width_m


def displacement(theta: float, inc: WheelIncrement) -> tuple[float, float, float]:
    """Return the (dx, dy, dtheta) produced by ``inc`` starting at heading ``theta``.

    The arc update (R + w/2)(sin(theta + d) - sin(theta)) is evaluated through the
    half-angle identity, chord = mean_travel * sinc(d/2), which stays accurate as
    d -> 0 instead of cancelling.
    """
    d = heading_delta(inc)
    travel = inc.mean_m
    if abs(d) < EPS_STRAIGHT:
        return travel * math.cos(theta), travel * math.sin(theta), d
    half = 0.5 * d
    chord = travel * math.sin(half) / half
    mid = theta + half
    return chord * math.cos(mid), chord * math.sin(mid), d


def propagate(p: Pose2D, inc: WheelIncrement) -> Pose2D:
    dx, dy, d = displacement(p.theta_rad, inc)
    return Pose2D(p.x_m + dx, p.y_m + dy, p.theta_rad + d)


def arc_radius(inc: WheelIncrement) -> float:
    """Left-wheel turn radius R = l / dtheta; infinite for straight motion."""
    d = heading_delta(inc)
    if abs(d) < EPS_STRAIGHT:
        return math.inf
    return inc.left_m / d
