"""Dynamic-reference-point path following for a differential-drive robot.

A reference point slides along the planned polyline at a fixed lookahead from
the robot. The circular arc tangent to the robot heading that passes through
the reference point gives the curvature, which is turned into wheel speeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geodesy import EnuCoord
from .odometry import Pose2D, wrap_angle


class PathComplete(Exception):
    """The robot has progressed beyond the final waypoint."""


@dataclass(frozen=True)
class PlannedPath:
    waypoints: tuple[EnuCoord, ...]
    points: np.ndarray = field(init=False, repr=False, compare=False)
    cumulative: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        wps = tuple(self.waypoints)
        if len(wps) < 2:
            raise ValueError("a path needs at least two waypoints")
        pts = np.array([[w.east_m, w.north_m] for w in wps])
        seg = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(seg <= 1e-3):
            i = int(np.argmax(seg <= 1e-3))
            raise ValueError(f"waypoints {i} and {i + 1} are closer than 1 mm")
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        pts.flags.writeable = False
        cum.flags.writeable = False
        object.__setattr__(self, "waypoints", wps)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "cumulative", cum)
        # Plain-float segment table: (ax, ay, dx, dy, start arclength, length).
        segs = tuple(
            (float(pts[i, 0]), float(pts[i, 1]), float(pts[i + 1, 0] - pts[i, 0]), float(pts[i + 1, 1] - pts[i, 1]), float(cum[i]), float(seg[i]))
            for i in range(len(seg))
        )
        object.__setattr__(self, "_segments", segs)

    @classmethod
    def from_xy(cls, xy: Sequence[Sequence[float]]) -> PlannedPath:
        return cls(tuple(EnuCoord(float(e), float(n)) for e, n in xy))

    @property
    def length(self) -> float:
        _, _, _, _, s0, seg_len = self._segments[-1]
        return s0 + seg_len

    def point_at(self, s: float) -> tuple[float, float]:
        s = min(max(s, 0.0), self.length)
        for ax, ay, dx, dy, s0, seg_len in self._segments:
            if s <= s0 + seg_len:
                break
        t = (s - s0) / seg_len
        return ax + t * dx, ay + t * dy

    def closest(self, x: float, y: float, s_min: float = 0.0) -> tuple[float, float, float, float]:
        """Closest path point at arclength >= ``s_min``: (east, north, arclength, distance)."""
        best = (math.inf, 0.0, 0.0, 0.0)
        for ax, ay, dx, dy, s0, seg_len in self._segments:
            if s0 + seg_len < s_min:
                continue
            t = ((x - ax) * dx + (y - ay) * dy) / (seg_len * seg_len)
            t = min(max(t, (s_min - s0) / seg_len, 0.0), 1.0)
            px, py = ax + t * dx, ay + t * dy
            dist = math.hypot(px - x, py - y)
            if dist < best[0]:
                best = (dist, px, py, s0 + t * seg_len)
        dist, px, py, s = best
        return px, py, s, dist

    def cross_track(self, x: float, y: float) -> float:
        """Distance from (x, y) to the nearest point of the polyline."""
        return self.closest(x, y)[3]


def _circle_hits(path: PlannedPath, x: float, y: float, radius: float) -> list[float]:
    """Arclengths where the circle centred at (x, y) crosses the polyline."""
    hits = []
    for ax, ay, dx, dy, s0, seg_len in path._segments:
        fx, fy = ax - x, ay - y
        qa = dx * dx + dy * dy
        qb = 2.0 * (fx * dx + fy * dy)
        qc = fx * fx + fy * fy - radius * radius
        disc = qb * qb - 4.0 * qa * qc
        if disc < 0.0:
            continue
        root = math.sqrt(disc)
        for t in ((-qb - root) / (2.0 * qa), (-qb + root) / (2.0 * qa)):
            if 0.0 <= t <= 1.0:
                hits.append(s0 + t * seg_len)
    return hits


def reference_point(
    path: PlannedPath,
    pose: Pose2D,
    lookahead_m: float,
    progress_m: float = 0.0,
    window_m: float | None = None,
) -> tuple[float, float, float]:
    """Return the dynamic reference point as (east, north, arclength).

    The point is the crossing of the lookahead circle with the path that lies
    furthest along the path without falling behind ``progress_m``. Crossings
    further than ``window_m`` past the progress marker are ignored so that a
    neighbouring pass of the path cannot capture the robot. With no crossing the
    closest path point ahead of the marker is used. Within one lookahead of the
    goal the reference pins to the final waypoint.

    Raises PathComplete once the robot has driven past the final waypoint.
    """
    if lookahead_m <= 0:
        raise ValueError("lookahead must be positive")
    x, y = pose.x_m, pose.y_m
    ax, ay, dx, dy, _, _ = path._segments[-1]
    end = (ax + dx, ay + dy)
    total = path.length
    if progress_m >= total and _passed_goal(path, x, y):
        raise PathComplete()

    hits = [s for s in _circle_hits(path, x, y, lookahead_m) if s >= progress_m]
    if window_m is not None:
        hits = [s for s in hits if s <= progress_m + window_m]
    if math.hypot(end[0] - x, end[1] - y) < lookahead_m and (
        progress_m > total - 2.0 * lookahead_m or not hits
    ):
        return end[0], end[1], total
    if hits:
        s = max(hits)
        return (*path.point_at(s), s)
    px, py, s, _ = path.closest(x, y, progress_m)
    return px, py, s


def _passed_goal(path: PlannedPath, x: float, y: float, tolerance_m: float = 0.02) -> bool:
    ax, ay, dx, dy, _, seg_len = path._segments[-1]
    bx, by = ax + dx, ay + dy
    along = ((x - bx) * dx + (y - by) * dy) / seg_len
    return along >= 0.0 or math.hypot(x - bx, y - by) <= tolerance_m


@dataclass(frozen=True)
class ArcSolution:
    curvature_inv_m: float
    heading_error_rad: float
    behind: bool = False


def arc_to_reference(
    pose: Pose2D,
    ref: tuple[float, float],
    lookahead_m: float,
    max_curvature: float = 4.0,
    behind_margin_rad: float = 0.1,
) -> ArcSolution:
    """Curvature of the circle tangent to the heading through the robot and ``ref``.

    kappa = 2 sin(eta) / L1 with eta the signed bearing of ``ref`` relative to the
    heading. A reference more than pi/2 + margin behind the robot yields a
    maximum-curvature turn toward it, flagged ``behind``.
    """
    dx, dy = ref[0] - pose.x_m, ref[1] - pose.y_m
    if dx == 0.0 and dy == 0.0:
        raise ValueError("reference point coincides with the robot")
    eta = wrap_angle(math.atan2(dy, dx) - pose.theta_rad)
    if abs(eta) > math.pi / 2 + behind_margin_rad:
        return ArcSolution(math.copysign(max_curvature, eta), eta, behind=True)
    return ArcSolution(2.0 * math.sin(eta) / lookahead_m, eta)


@dataclass(frozen=True)
class GuidanceCommand:
    v_left_mps: float
    v_right_mps: float
    curvature_inv_m: float
    saturated: bool = False

    @property
    def speed_mps(self) -> float:
        return 0.5 * (self.v_left_mps + self.v_right_mps)


STOP = GuidanceCommand(0.0, 0.0, 0.0)


def wheel_speeds(
    curvature: float, v_nominal: float, track_width_m: float, v_max: float = math.inf
) -> GuidanceCommand:
    half_w = 0.5 * track_width_m
    saturated = False
    # Past |kappa| w/2 = 1 the inner wheel would reverse; pivot on it instead.
    if abs(curvature) * half_w > 1.0:
        curvature = math.copysign(1.0 / half_w, curvature)
        saturated = True
    v_left = v_nominal * (1.0 - curvature * half_w)
    v_right = v_nominal * (1.0 + curvature * half_w)
    peak = max(abs(v_left), abs(v_right))
    if peak > v_max:
        scale = v_max / peak
        v_left *= scale
        v_right *= scale
        saturated = True
    return GuidanceCommand(v_left, v_right, curvature, saturated)


@dataclass
class PathFollower:
    """Guidance loop state: owns the monotone progress marker along the path.

    ``mode="static"`` holds each reference point fixed until the robot comes
    within ``capture_m`` of it, then jumps one lookahead further along the path.
    """

    path: PlannedPath
    lookahead_m: float = 1.0
    v_nominal_mps: float = 0.2
    track_width_m: float = 0.5
    v_max_mps: float = math.inf
    mode: str = "dynamic"
    capture_m: float = 0.25
    window_factor: float = 3.0
    progress_m: float = 0.0
    reference: tuple[float, float] | None = None

    def __post_init__(self):
        if self.mode not in ("dynamic", "static"):
            raise ValueError(f"unknown guidance mode {self.mode!r}")

    def command(self, pose: Pose2D) -> tuple[GuidanceCommand, ArcSolution]:
        if self.mode == "static":
            ref, chord = self._static_reference(pose)
        else:
            rx, ry, s = reference_point(
                self.path, pose, self.lookahead_m, self.progress_m, self.window_factor * self.lookahead_m
            )
            self.progress_m = max(self.progress_m, s)
            ref, chord = (rx, ry), self.lookahead_m
        self.reference = ref
        if math.hypot(ref[0] - pose.x_m, ref[1] - pose.y_m) < 1e-9:
            # Sitting on the goal point.
            raise PathComplete()
        arc = arc_to_reference(pose, ref, chord, max_curvature=2.0 / self.track_width_m)
        cmd = wheel_speeds(arc.curvature_inv_m, self.v_nominal_mps, self.track_width_m, self.v_max_mps)
        return cmd, arc

    def _static_reference(self, pose: Pose2D) -> tuple[tuple[float, float], float]:
        if self.progress_m >= self.path.length and _passed_goal(self.path, pose.x_m, pose.y_m):
            raise PathComplete()
        if self.reference is None:
            _, _, s, _ = self.path.closest(pose.x_m, pose.y_m)
            self.progress_m = min(s + self.lookahead_m, self.path.length)
        ref = self.path.point_at(self.progress_m)
        dist = math.hypot(ref[0] - pose.x_m, ref[1] - pose.y_m)
        if dist < self.capture_m and self.progress_m < self.path.length:
            self.progress_m = min(self.progress_m + self.lookahead_m, self.path.length)
            ref = self.path.point_at(self.progress_m)
            dist = math.hypot(ref[0] - pose.x_m, ref[1] - pose.y_m)
        return ref, max(dist, 1e-9)
