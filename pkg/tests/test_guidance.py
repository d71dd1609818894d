import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cropspray.geodesy import EnuCoord
from cropspray.guidance import (
    PathComplete,
    PathFollower,
    PlannedPath,
    arc_to_reference,
    reference_point,
    wheel_speeds,
)
from cropspray.odometry import Pose2D, WheelIncrement, heading_delta, propagate

LINE = PlannedPath.from_xy([[0, 0], [10, 0]])
DT = 0.02


class TestPlannedPath:
    def test_rejects_duplicate_waypoints(self):
        with pytest.raises(ValueError):
            PlannedPath.from_xy([[0, 0], [0.0005, 0], [1, 0]])

    def test_rejects_single_waypoint(self):
        with pytest.raises(ValueError):
            PlannedPath((EnuCoord(0, 0),))

    def test_length_and_point_at(self):
        p = PlannedPath.from_xy([[0, 0], [3, 0], [3, 4]])
        assert p.length == pytest.approx(7.0)
        assert p.point_at(5.0) == pytest.approx((3.0, 2.0))

    def test_cross_track(self):
        p = PlannedPath.from_xy([[0, 0], [3, 0], [3, 4]])
        assert p.cross_track(1.0, -0.5) == pytest.approx(0.5)
        assert p.cross_track(4.0, 2.0) == pytest.approx(1.0)
        assert p.cross_track(4.0, 5.0) == pytest.approx(math.sqrt(2))


class TestReferencePoint:
    def test_on_path(self):
        x, y, s = reference_point(LINE, Pose2D(0, 0, 0), 1.0)
        assert (x, y, s) == pytest.approx((1.0, 0.0, 1.0))

    def test_offset_circle_line_intersection(self):
        x, y, _ = reference_point(LINE, Pose2D(0, 0.5, 0), 1.0)
        assert (x, y) == pytest.approx((math.sqrt(0.75), 0.0), abs=1e-12)

    def test_far_from_path_falls_back_to_closest(self):
        x, y, _ = reference_point(LINE, Pose2D(0, 5, 0), 1.0)
        assert (x, y) == pytest.approx((0.0, 0.0))

    def test_never_behind_progress(self):
        _, _, s = reference_point(LINE, Pose2D(4, 0, 0), 1.0, progress_m=6.0)
        assert s >= 6.0

    def test_window_excludes_return_pass(self):
        rows = PlannedPath.from_xy([[0, 0], [12, 0], [12, 0.8], [0, 0.8]])
        _, y, s = reference_point(rows, Pose2D(3, 0.4, 0), 1.0, progress_m=3.0, window_m=3.0)
        assert y == pytest.approx(0.0) and s < 6.0

    def test_near_goal_pins_to_final_waypoint(self):
        x, y, s = reference_point(LINE, Pose2D(9.5, 0, 0), 1.0, progress_m=9.9)
        assert (x, y, s) == pytest.approx((10.0, 0.0, 10.0))

    def test_path_complete_past_goal(self):
        with pytest.raises(PathComplete):
            reference_point(LINE, Pose2D(10.05, 0, 0), 1.0, progress_m=10.0)

    def test_rejects_non_positive_lookahead(self):
        with pytest.raises(ValueError):
            reference_point(LINE, Pose2D(0, 0, 0), 0.0)


class TestArc:
    def test_dead_ahead(self):
        assert arc_to_reference(Pose2D(0, 0, 0), (1.0, 0.0), 1.0).curvature_inv_m == 0.0

    @pytest.mark.parametrize("eta, kappa", [(math.pi / 6, 1.0), (-math.pi / 6, -1.0)])
    def test_chord_geometry(self, eta, kappa):
        arc = arc_to_reference(Pose2D(0, 0, 0), (math.cos(eta), math.sin(eta)), 1.0)
        assert arc.curvature_inv_m == pytest.approx(kappa, abs=1e-12)
        assert not arc.behind

    def test_arc_passes_through_reference(self):
        pose, ref = Pose2D(1.0, 2.0, 0.4), (1.6, 2.9)
        l1 = math.dist((pose.x_m, pose.y_m), ref)
        k = arc_to_reference(pose, ref, l1).curvature_inv_m
        cx = pose.x_m - math.sin(pose.theta_rad) / k
        cy = pose.y_m + math.cos(pose.theta_rad) / k
        assert math.dist((cx, cy), ref) == pytest.approx(abs(1 / k), abs=1e-12)

    def test_behind_is_flagged(self):
        arc = arc_to_reference(Pose2D(0, 0, 0), (-1.0, 0.1), 1.0, max_curvature=4.0)
        assert arc.behind and arc.curvature_inv_m == 4.0

    def test_coincident_reference(self):
        with pytest.raises(ValueError):
            arc_to_reference(Pose2D(0, 0, 0), (0.0, 0.0), 1.0)


class TestWheelSpeeds:
    @pytest.mark.parametrize(
        "kappa, expected", [(0.0, (0.2, 0.2)), (1.0, (0.15, 0.25)), (-1.0, (0.25, 0.15))]
    )
    def test_differential_drive(self, kappa, expected):
        cmd = wheel_speeds(kappa, 0.2, 0.5)
        assert (cmd.v_left_mps, cmd.v_right_mps) == pytest.approx(expected, abs=1e-12)
        assert cmd.speed_mps == pytest.approx(0.2, abs=1e-15)
        assert not cmd.saturated

    def test_saturation_preserves_curvature(self):
        cmd = wheel_speeds(3.0, 0.4, 0.5, v_max=0.5)
        assert cmd.saturated
        assert max(abs(cmd.v_left_mps), abs(cmd.v_right_mps)) == pytest.approx(0.5)
        assert (cmd.v_right_mps - cmd.v_left_mps) / (0.5 * (cmd.v_left_mps + cmd.v_right_mps) * 0.5) == pytest.approx(3.0)

    def test_excessive_curvature_clamped(self):
        cmd = wheel_speeds(10.0, 0.2, 0.5)
        assert cmd.saturated and cmd.v_left_mps == pytest.approx(0.0) and cmd.curvature_inv_m == pytest.approx(4.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-3.9, 3.9), st.floats(0.05, 0.5))
def test_kinematic_consistency(kappa, v):
    cmd = wheel_speeds(kappa, v, 0.5)
    inc = WheelIncrement(cmd.v_left_mps * DT, cmd.v_right_mps * DT, 0.5)
    assert heading_delta(inc) == pytest.approx(kappa * v * DT, abs=1e-9)


def _closed_loop(follower: PathFollower, pose: Pose2D, max_ticks: int = 20000):
    poses, marks = [], []
    for _ in range(max_ticks):
        try:
            cmd, _ = follower.command(pose)
        except PathComplete:
            break
        pose = propagate(pose, WheelIncrement(cmd.v_left_mps * DT, cmd.v_right_mps * DT, 0.5))
        poses.append(pose)
        marks.append(follower.progress_m)
    return poses, marks


def test_progress_marker_monotone():
    path = PlannedPath.from_xy([[0, 0], [6, 0], [6, 2], [0, 2]])
    poses, marks = _closed_loop(PathFollower(path), Pose2D(0, 0.3, 0))
    assert all(b >= a for a, b in zip(marks, marks[1:]))
    assert math.dist((poses[-1].x_m, poses[-1].y_m), (0.0, 2.0)) < 0.05


def test_static_mode_reaches_goal():
    path = PlannedPath.from_xy([[0, 0], [8, 0]])
    poses, _ = _closed_loop(PathFollower(path, mode="static"), Pose2D(0, 0.3, 0))
    assert poses[-1].x_m == pytest.approx(8.0, abs=0.05)


def test_unknown_mode():
    with pytest.raises(ValueError):
        PathFollower(LINE, mode="sideways")


def test_convergence_from_offset():
    path = PlannedPath.from_xy([[0, 0], [20, 0]])
    poses, _ = _closed_loop(PathFollower(path), Pose2D(0, 0.5, 0))
    err = [abs(p.y_m) for p in poses]
    settle = max(i for i, e in enumerate(err) if e >= 0.01) + 1
    assert settle < len(err) // 2
    assert max(err[settle:]) < 0.01
    assert poses[-1].x_m == pytest.approx(20.0, abs=0.05)
