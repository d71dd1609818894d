"""Camera detection -> nozzle pan/tilt aiming and spray/tank accounting.

Camera and nozzle frames share one convention: x along the optical axis,
y toward image-right, z toward image-up. Angles are linear in pixels across
the field of view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Camera origin expressed in the home-position nozzle frame (m).
DEFAULT_CAMERA_IN_NOZZLE = (0.20, 0.0, 0.10)
SERVO_LIMIT_RAD = math.pi / 2
DEFAULT_FLOW_L_PER_MIN = 10.0
DEFAULT_VOLUME_ML = 200.0
DEFAULT_TANK_ML = 10000.0


class TargetingError(ValueError):
    pass


class UnreachableTarget(TargetingError):
    pass


class LowTank(RuntimeError):
    pass


@dataclass(frozen=True)
class CameraModel:
    width_px: int = 1080
    height_px: int = 720
    hfov_rad: float = math.radians(62.2)
    vfov_rad: float = math.radians(48.8)

    def __post_init__(self):
        for name in ("hfov_rad", "vfov_rad"):
            if not 0.0 < getattr(self, name) < math.pi:
                raise ValueError(f"{name} must lie in (0, pi)")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("image size must be positive")

    @property
    def rad_per_px_x(self) -> float:
        return self.hfov_rad / self.width_px

    @property
    def rad_per_px_y(self) -> float:
        return self.vfov_rad / self.height_px

    def contains(self, px: float, py: float) -> bool:
        return 0.0 <= px <= self.width_px and 0.0 <= py <= self.height_px


@dataclass(frozen=True)
class Detection:
    bbox: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max
    confidence: float = 1.0
    side: str = "left"
    plant_id: str | None = None
    range_m: float | None = None  # supplied by the simulator, not measured

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        if x1 < x0 or y1 < y0:
            raise ValueError(f"malformed bbox {self.bbox}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be left or right, got {self.side!r}")

    @property
    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.bbox
        return 0.5 * (x0 + x1), 0.5 * (y0 + y1)

    def within(self, cam: CameraModel) -> bool:
        x0, y0, x1, y1 = self.bbox
        return cam.contains(x0, y0) and cam.contains(x1, y1)


def pixel_to_angles(cam: CameraModel, center: tuple[float, float]) -> tuple[float, float]:
    """Pixel centre -> (alpha_y, alpha_z): vertical angle (down positive), horizontal (right positive)."""
    px, py = center
    alpha_z = (px - 0.5 * cam.width_px) * cam.rad_per_px_x
    alpha_y = (py - 0.5 * cam.height_px) * cam.rad_per_px_y
    return alpha_y, alpha_z


def angles_to_pixel(cam: CameraModel, alpha_y: float, alpha_z: float) -> tuple[float, float]:
    return (
        0.5 * cam.width_px + alpha_z / cam.rad_per_px_x,
        0.5 * cam.height_px + alpha_y / cam.rad_per_px_y,
    )


def plant_in_camera(d: float, alpha_y: float, alpha_z: float) -> np.ndarray:
    """Homogeneous camera-frame plant position; ``d`` is the range in the camera x-y plane."""
    if d <= 0:
        raise TargetingError("range must be positive")
    if abs(alpha_z) >= math.pi / 2:
        raise TargetingError("target lies behind the focal plane")
    c = d * math.cos(alpha_z)
    return np.array([c, d * math.sin(alpha_z), -c * math.tan(alpha_y), 1.0])


def range_from_ground_plane(alpha_y: float, alpha_z: float, drop_m: float) -> float:
    """Range for a target ``drop_m`` below the camera, from its depression angle."""
    if alpha_y <= 0:
        raise TargetingError("target at or above the horizon has no ground-plane range")
    return drop_m / (math.cos(alpha_z) * math.tan(alpha_y))


def translation(t: tuple[float, float, float] | np.ndarray) -> np.ndarray:
    h = np.eye(4)
    h[:3, 3] = t
    return h


def camera_to_nozzle_matrix(camera_in_nozzle=DEFAULT_CAMERA_IN_NOZZLE) -> np.ndarray:
    """Home-position transform taking camera coordinates into nozzle coordinates."""
    return translation(camera_in_nozzle)


def invert_rigid(h: np.ndarray) -> np.ndarray:
    rot = h[:3, :3]
    inv = np.eye(4)
    inv[:3, :3] = rot.T
    inv[:3, 3] = -rot.T @ h[:3, 3]
    return inv


def camera_to_nozzle(p_cam: np.ndarray, h: np.ndarray) -> np.ndarray:
    rot = h[:3, :3]
    if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-9) or not np.allclose(h[3], [0, 0, 0, 1]):
        raise TargetingError("transform is not a rigid homogeneous matrix")
    return h @ p_cam


@dataclass(frozen=True)
class NozzlePose:
    pan_rad: float = 0.0  # about nozzle z
    tilt_rad: float = 0.0  # elevation toward nozzle +z
    limit_rad: float = SERVO_LIMIT_RAD

    def __post_init__(self):
        if abs(self.pan_rad) > self.limit_rad or abs(self.tilt_rad) > self.limit_rad:
            raise UnreachableTarget(f"pan/tilt ({self.pan_rad:.3f}, {self.tilt_rad:.3f}) rad beyond servo limits")

    def direction(self) -> np.ndarray:
        ct = math.cos(self.tilt_rad)
        return np.array([ct * math.cos(self.pan_rad), ct * math.sin(self.pan_rad), math.sin(self.tilt_rad)])


HOME = NozzlePose()


def nozzle_angles(p_nozzle: np.ndarray, limit_rad: float = SERVO_LIMIT_RAD) -> NozzlePose:
    x, y, z = p_nozzle[:3]
    if x <= 0:
        raise UnreachableTarget("plant is not in front of the nozzle")
    return NozzlePose(math.atan2(y, x), math.atan2(z, math.hypot(x, y)), limit_rad)


def incremental_angles(prev: NozzlePose, nxt: NozzlePose) -> tuple[float, float]:
    """(delta tilt, delta pan) taking the nozzle from ``prev`` to ``nxt``."""
    return nxt.tilt_rad - prev.tilt_rad, nxt.pan_rad - prev.pan_rad


def apply_increment(prev: NozzlePose, delta: tuple[float, float]) -> NozzlePose:
    return NozzlePose(prev.pan_rad + delta[1], prev.tilt_rad + delta[0], prev.limit_rad)


def ray_miss_distance(pose: NozzlePose, target: np.ndarray) -> float:
    """Perpendicular distance from ``target`` (nozzle frame) to the aiming ray."""
    u = pose.direction()
    p = np.asarray(target[:3], dtype=float)
    along = float(p @ u)
    if along < 0:
        return float(np.linalg.norm(p))
    return float(np.linalg.norm(p - along * u))


@dataclass(frozen=True)
class SprayPlan:
    duration_s: float
    volume_ml: float
    flow_ml_per_s: float


@dataclass(frozen=True)
class TankState:
    capacity_ml: float = DEFAULT_TANK_ML
    remaining_ml: float | None = None

    def __post_init__(self):
        if self.remaining_ml is None:
            object.__setattr__(self, "remaining_ml", self.capacity_ml)
        if not 0.0 <= self.remaining_ml <= self.capacity_ml:
            raise ValueError(f"remaining {self.remaining_ml} ml outside [0, {self.capacity_ml}]")

    def sprays_left(self, volume_ml: float = DEFAULT_VOLUME_ML) -> int:
        return int(self.remaining_ml // volume_ml)


def plan_spray(
    volume_ml: float, flow_l_per_min: float, tank: TankState
) -> tuple[SprayPlan, TankState]:
    if volume_ml <= 0:
        raise ValueError("spray volume must be positive")
    if flow_l_per_min <= 0:
        raise ValueError("flow rate must be positive")
    if tank.remaining_ml < volume_ml:
        raise LowTank(f"{tank.remaining_ml} ml left, {volume_ml} ml needed; refill required")
    flow_ml_per_min = flow_l_per_min * 1000.0
    # Dividing in per-minute units keeps 200 ml at 10 l/min at exactly 1.2 s.
    duration = volume_ml * 60.0 / flow_ml_per_min
    plan = SprayPlan(duration, volume_ml, flow_ml_per_min / 60.0)
    return plan, TankState(tank.capacity_ml, tank.remaining_ml - volume_ml)


def aim(
    cam: CameraModel,
    det: Detection,
    range_m: float,
    h: np.ndarray,
    limit_rad: float = SERVO_LIMIT_RAD,
) -> tuple[NozzlePose, np.ndarray]:
    """Full chain from a detection and range to a nozzle pose; also returns the nozzle-frame target."""
    alpha_y, alpha_z = pixel_to_angles(cam, det.center)
    p_nozzle = camera_to_nozzle(plant_in_camera(range_m, alpha_y, alpha_z), h)
    return nozzle_angles(p_nozzle, limit_rad), p_nozzle
