"""Deterministic discrete-time world: true kinematics, plants and sensor synthesis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geodesy import Datum, EnuCoord, GeodeticCoord, enu_to_llh
from .guidance import GuidanceCommand
from .odometry import Pose2D, WheelIncrement, propagate, wrap_angle
from .targeting import DEFAULT_CAMERA_IN_NOZZLE, SERVO_LIMIT_RAD, CameraModel, Detection, camera_to_nozzle_matrix

MIN_RANGE_M = 0.3
MAX_RANGE_M = 3.0
SUBSYSTEMS = ("encoders", "gps", "imu", "camera", "range", "caster", "init")


@dataclass(frozen=True)
class NoiseConfig:
    encoder_slip_std: float = 0.02
    gps_std_m: float = 0.045
    gps_rate_hz: float = 5.0
    gps_outages: tuple[tuple[float, float], ...] = ()
    imu_std_rad: float = 0.01
    imu_rate_hz: float = 50.0
    pixel_std_px: float = 1.0
    range_std_m: float = 0.01
    caster_jitter_std_rad: float = 0.0

    def __post_init__(self):
        for name in (
            "encoder_slip_std",
            "gps_std_m",
            "imu_std_rad",
            "pixel_std_px",
            "range_std_m",
            "caster_jitter_std_rad",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.gps_rate_hz <= 0 or self.imu_rate_hz <= 0:
            raise ValueError("sensor rates must be positive")
        object.__setattr__(self, "gps_outages", tuple((float(a), float(b)) for a, b in self.gps_outages))

    @classmethod
    def zero(cls, **overrides) -> NoiseConfig:
        quiet = dict(
            encoder_slip_std=0.0,
            gps_std_m=0.0,
            imu_std_rad=0.0,
            pixel_std_px=0.0,
            range_std_m=0.0,
            caster_jitter_std_rad=0.0,
        )
        quiet.update(overrides)
        return cls(**quiet)


@dataclass(frozen=True)
class CameraMount:
    """Camera pose on the robot body (x forward, y left, z up from the ground)."""

    side: str
    x_m: float
    y_m: float
    z_m: float
    yaw_rad: float

    def axes(self) -> np.ndarray:
        """Rows: optical axis, image-right and image-up directions in the body frame."""
        c, s = math.cos(self.yaw_rad), math.sin(self.yaw_rad)
        return np.array([[c, s, 0.0], [s, -c, 0.0], [0.0, 0.0, 1.0]])


def default_mounts(lateral_m: float = 0.25, height_m: float = 0.5, forward_m: float = 0.0) -> tuple[CameraMount, ...]:
    return (
        CameraMount("left", forward_m, lateral_m, height_m, math.pi / 2),
        CameraMount("right", forward_m, -lateral_m, height_m, -math.pi / 2),
    )


@dataclass(frozen=True)
class RobotGeometry:
    track_width_m: float = 0.5
    max_wheel_speed_mps: float = 0.5
    camera: CameraModel = field(default_factory=CameraModel)
    mounts: tuple[CameraMount, ...] = field(default_factory=default_mounts)
    camera_in_nozzle_m: tuple[float, float, float] = DEFAULT_CAMERA_IN_NOZZLE
    servo_limit_rad: float = SERVO_LIMIT_RAD
    plant_radius_m: float = 0.08

    def mount(self, side: str) -> CameraMount:
        for m in self.mounts:
            if m.side == side:
                return m
        raise KeyError(side)

    @property
    def camera_to_nozzle(self) -> np.ndarray:
        return camera_to_nozzle_matrix(self.camera_in_nozzle_m)


@dataclass
class Plant:
    plant_id: str
    position: EnuCoord
    sprayed_volume_ml: float = 0.0


@dataclass(frozen=True)
class SensorBundle:
    tick: int
    time_s: float
    encoders: WheelIncrement
    gps: GeodeticCoord | None
    heading_rad: float | None
    detections: tuple[Detection, ...]


def camera_coordinates(pose: Pose2D, mount: CameraMount, points: np.ndarray) -> np.ndarray:
    """ENU points (n x 3) expressed in the camera frame of ``mount``."""
    c, s = math.cos(pose.theta_rad), math.sin(pose.theta_rad)
    dx = points[:, 0] - pose.x_m
    dy = points[:, 1] - pose.y_m
    body = np.column_stack([c * dx + s * dy - mount.x_m, -s * dx + c * dy - mount.y_m, points[:, 2] - mount.z_m])
    return body @ mount.axes().T


def _to_ticks(seconds: float, dt: float) -> int:
    return math.floor(seconds / dt + 1e-9)


class World:
    """Single-owner simulation state. Identical seed and inputs give identical outputs."""

    def __init__(
        self,
        pose: Pose2D,
        plants: Sequence[Plant],
        datum: Datum,
        geometry: RobotGeometry | None = None,
        noise: NoiseConfig | None = None,
        tick_hz: float = 50.0,
        seed: int = 0,
    ):
        if tick_hz <= 0:
            raise ValueError("tick rate must be positive")
        self.true_pose = pose
        self.plants = list(plants)
        self.datum = datum
        self.geometry = geometry or RobotGeometry()
        self.noise = noise or NoiseConfig()
        self.dt = 1.0 / tick_hz
        self.tick = 0
        self.seed = seed
        streams = np.random.SeedSequence(seed).spawn(len(SUBSYSTEMS))
        self.rng = {name: np.random.default_rng(ss) for name, ss in zip(SUBSYSTEMS, streams)}
        self.gps_every = max(1, round(tick_hz / self.noise.gps_rate_hz))
        self.imu_every = max(1, round(tick_hz / self.noise.imu_rate_hz))
        self._outages = [(_to_ticks(a, self.dt), _to_ticks(b, self.dt)) for a, b in self.noise.gps_outages]
        self._plant_xyz = np.array([[p.position.east_m, p.position.north_m, p.position.up_m] for p in self.plants]).reshape(-1, 3)

    @property
    def time_s(self) -> float:
        return self.tick * self.dt

    def gps_scheduled(self, tick: int) -> bool:
        return tick % self.gps_every == 0

    def in_outage(self, tick: int) -> bool:
        # Windows are (start, end]: a fix stamped exactly at the start still arrives.
        return any(a < tick <= b for a, b in self._outages)

    def step(self, cmd: GuidanceCommand) -> SensorBundle:
        w = self.geometry.track_width_m
        left = cmd.v_left_mps * self.dt
        right = cmd.v_right_mps * self.dt
        pose = propagate(self.true_pose, WheelIncrement(left, right, w))
        if self.noise.caster_jitter_std_rad > 0:
            jitter = self.rng["caster"].normal(0.0, self.noise.caster_jitter_std_rad)
            pose = Pose2D(pose.x_m, pose.y_m, pose.theta_rad + jitter)
        self.true_pose = pose
        self.tick += 1

        slip = self.rng["encoders"].normal(0.0, self.noise.encoder_slip_std, 2)
        encoders = WheelIncrement(left * (1.0 + slip[0]), right * (1.0 + slip[1]), w)

        gps = None
        if self.gps_scheduled(self.tick):
            err = self.rng["gps"].normal(0.0, self.noise.gps_std_m, 3)
            if not self.in_outage(self.tick):
                gps = enu_to_llh(EnuCoord(pose.x_m + err[0], pose.y_m + err[1], err[2]), self.datum)

        heading = None
        if self.tick % self.imu_every == 0:
            heading = wrap_angle(pose.theta_rad + self.rng["imu"].normal(0.0, self.noise.imu_std_rad))

        detections = tuple(d for m in self.geometry.mounts for d in self.project_plants(m.side))
        return SensorBundle(self.tick, self.time_s, encoders, gps, heading, detections)

    def project_plants(self, side: str) -> list[Detection]:
        """Detections of every plant inside the camera frustum on ``side``."""
        if not self.plants:
            return []
        cam = self.geometry.camera
        mount = self.geometry.mount(side)
        pc = camera_coordinates(self.true_pose, mount, self._plant_xyz)
        x, y, z = pc.T
        dist = np.sqrt(x * x + y * y + z * z)
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha_z = np.arctan2(y, x)
            alpha_y = np.arctan2(-z, x)
        visible = (
            (x > 0)
            & (dist >= MIN_RANGE_M)
            & (dist <= MAX_RANGE_M)
            & (np.abs(alpha_z) <= 0.5 * cam.hfov_rad)
            & (np.abs(alpha_y) <= 0.5 * cam.vfov_rad)
        )
        out = []
        for i in np.flatnonzero(visible):
            px = 0.5 * cam.width_px + alpha_z[i] / cam.rad_per_px_x
            py = 0.5 * cam.height_px + alpha_y[i] / cam.rad_per_px_y
            if self.noise.pixel_std_px > 0:
                nx, ny = self.rng["camera"].normal(0.0, self.noise.pixel_std_px, 2)
                px = min(max(px + nx, 0.0), cam.width_px)
                py = min(max(py + ny, 0.0), cam.height_px)
            half = math.atan2(self.geometry.plant_radius_m, dist[i])
            hx = min(half / cam.rad_per_px_x, px, cam.width_px - px)
            hy = min(half / cam.rad_per_px_y, py, cam.height_px - py)
            rng_m = math.hypot(x[i], y[i])
            if self.noise.range_std_m > 0:
                rng_m = max(rng_m + self.rng["range"].normal(0.0, self.noise.range_std_m), 1e-3)
            out.append(
                Detection(
                    (px - hx, py - hy, px + hx, py + hy),
                    1.0,
                    side,
                    self.plants[i].plant_id,
                    rng_m,
                )
            )
        return out

    def plant_in_nozzle(self, index: int, side: str) -> np.ndarray:
        """True homogeneous position of plant ``index`` in the home-position nozzle frame."""
        mount = self.geometry.mount(side)
        pc = camera_coordinates(self.true_pose, mount, self._plant_xyz[index : index + 1])[0]
        return self.geometry.camera_to_nozzle @ np.append(pc, 1.0)
