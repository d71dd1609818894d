"""Mission configuration: JSON document validated into runtime objects."""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .geodesy import Datum, EnuCoord, GeodeticCoord, llh_to_enu
from .guidance import PlannedPath
from .odometry import Pose2D
from .simworld import CameraMount, NoiseConfig, Plant, RobotGeometry
from .targeting import CameraModel

BUNDLED = ("demo", "straight", "nees")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LLH(_Strict):
    latitude_deg: float = Field(ge=-90, le=90)
    longitude_deg: float
    height_m: float = 0.0

    def coord(self) -> GeodeticCoord:
        return GeodeticCoord(self.latitude_deg, self.longitude_deg, self.height_m)


class Waypoints(_Strict):
    frame: Literal["enu", "llh"] = "enu"
    points: list[list[float]] = Field(min_length=2)

    @field_validator("points")
    @classmethod
    def _arity(cls, v):
        for p in v:
            if len(p) not in (2, 3):
                raise ValueError(f"waypoint {p} must have 2 or 3 components")
        return v


class PlantSpec(_Strict):
    id: str
    frame: Literal["enu", "llh"] = "enu"
    position: list[float] = Field(min_length=2, max_length=3)
    height_m: float = 0.25


class CameraSpec(_Strict):
    width_px: int = Field(1080, gt=0)
    height_px: int = Field(720, gt=0)
    hfov_deg: float = Field(62.2, gt=0, lt=180)
    vfov_deg: float = Field(48.8, gt=0, lt=180)


class RobotSpec(_Strict):
    track_width_m: float = Field(0.5, gt=0)
    max_wheel_speed_mps: float = Field(0.5, gt=0)
    camera: CameraSpec = CameraSpec()
    camera_height_m: float = Field(0.5, gt=0)
    camera_lateral_offset_m: float = 0.25
    camera_forward_offset_m: float = 0.0
    camera_in_nozzle_m: tuple[float, float, float] = (0.20, 0.0, 0.10)
    servo_limit_deg: float = Field(90.0, gt=0, le=90)
    plant_radius_m: float = Field(0.08, gt=0)


class NoiseSpec(_Strict):
    encoder_slip_std: float = Field(0.02, ge=0)
    gps_std_m: float = Field(0.045, ge=0)
    gps_rate_hz: float = Field(5.0, gt=0)
    gps_outages: list[tuple[float, float]] = []
    imu_std_rad: float = Field(0.01, ge=0)
    imu_rate_hz: float = Field(50.0, gt=0)
    pixel_std_px: float = Field(1.0, ge=0)
    range_std_m: float = Field(0.01, ge=0)
    caster_jitter_std_rad: float = Field(0.0, ge=0)

    @field_validator("gps_outages")
    @classmethod
    def _ordered(cls, v):
        for a, b in v:
            if not 0 <= a < b:
                raise ValueError(f"outage window ({a}, {b}) must satisfy 0 <= start < end")
        return v


class FilterSpec(_Strict):
    """Filter noise assumptions; ``None`` means use the world noise (with a floor)."""

    process_model: Literal["slip", "travel_scaled"] = "slip"
    slip_std: Optional[float] = Field(None, ge=0)
    sigma_xy: float = Field(0.02, ge=0)
    sigma_theta: float = Field(0.05, ge=0)
    gps_std_m: Optional[float] = Field(None, gt=0)
    imu_std_rad: Optional[float] = Field(None, gt=0)
    initial_std_xy_m: float = Field(0.01, gt=0)
    initial_std_theta_rad: float = Field(0.01, gt=0)
    sample_initial_error: bool = False


class GuidanceSpec(_Strict):
    lookahead_m: float = Field(1.0, gt=0)
    v_nominal_mps: float = Field(0.2, gt=0)
    mode: Literal["dynamic", "static"] = "dynamic"


class SpraySpec(_Strict):
    flow_l_per_min: float = Field(10.0, gt=0)
    volume_per_plant_ml: float = Field(200.0, gt=0)
    tank_capacity_ml: float = Field(10000.0, gt=0)
    tank_initial_ml: Optional[float] = Field(None, ge=0)
    range_source: Literal["truth", "ground_plane"] = "truth"


class SimSpec(_Strict):
    tick_hz: float = Field(50.0, gt=0)
    duration_cap_s: float = Field(600.0, gt=0)


class StartPose(_Strict):
    x_m: float
    y_m: float
    theta_deg: float


class MissionConfig(_Strict):
    name: str = "mission"
    datum: LLH
    waypoints: Waypoints
    plants: list[PlantSpec] = []
    start: Optional[StartPose] = None
    robot: RobotSpec = RobotSpec()
    noise: NoiseSpec = NoiseSpec()
    filter: FilterSpec = FilterSpec()
    guidance: GuidanceSpec = GuidanceSpec()
    spray: SpraySpec = SpraySpec()
    sim: SimSpec = SimSpec()
    seed: int = 0

    @model_validator(mode="after")
    def _consistency(self):
        ids = [p.id for p in self.plants]
        if len(ids) != len(set(ids)):
            raise ValueError("plant ids must be unique")
        if self.spray.tank_initial_ml is not None and self.spray.tank_initial_ml > self.spray.tank_capacity_ml:
            raise ValueError("spray.tank_initial_ml exceeds tank_capacity_ml")
        return self

    # Runtime views -------------------------------------------------------

    def datum_obj(self) -> Datum:
        return Datum(self.datum.coord())

    def _enu(self, frame: str, p: list[float], datum: Datum) -> EnuCoord:
        if frame == "llh":
            return llh_to_enu(GeodeticCoord(p[0], p[1], p[2] if len(p) > 2 else self.datum.height_m), datum)
        return EnuCoord(p[0], p[1], p[2] if len(p) > 2 else 0.0)

    def path(self) -> PlannedPath:
        datum = self.datum_obj()
        wps = [self._enu(self.waypoints.frame, p, datum) for p in self.waypoints.points]
        # Guidance is planar.
        return PlannedPath(tuple(EnuCoord(w.east_m, w.north_m) for w in wps))

    def plant_list(self) -> list[Plant]:
        datum = self.datum_obj()
        out = []
        for spec in self.plants:
            e = self._enu(spec.frame, spec.position, datum)
            out.append(Plant(spec.id, EnuCoord(e.east_m, e.north_m, spec.height_m)))
        return out

    def start_pose(self, path: PlannedPath) -> Pose2D:
        if self.start is not None:
            return Pose2D(self.start.x_m, self.start.y_m, math.radians(self.start.theta_deg))
        (x0, y0), (x1, y1) = path.points[0], path.points[1]
        return Pose2D(float(x0), float(y0), math.atan2(y1 - y0, x1 - x0))

    def geometry(self) -> RobotGeometry:
        r = self.robot
        cam = CameraModel(r.camera.width_px, r.camera.height_px, math.radians(r.camera.hfov_deg), math.radians(r.camera.vfov_deg))
        mounts = (
            CameraMount("left", r.camera_forward_offset_m, r.camera_lateral_offset_m, r.camera_height_m, math.pi / 2),
            CameraMount("right", r.camera_forward_offset_m, -r.camera_lateral_offset_m, r.camera_height_m, -math.pi / 2),
        )
        return RobotGeometry(
            r.track_width_m,
            r.max_wheel_speed_mps,
            cam,
            mounts,
            tuple(r.camera_in_nozzle_m),
            math.radians(r.servo_limit_deg),
            r.plant_radius_m,
        )

    def noise_obj(self) -> NoiseConfig:
        return NoiseConfig(**self.noise.model_dump())


def _format(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> MissionConfig:
    try:
        return MissionConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format(err)) from None


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("cropspray") / "missions" / f"{name}.json"))


def load_config(path: str | Path) -> MissionConfig:
    """Load a mission file; a bare bundled name ("demo", "straight", "nees") also works."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        p = bundled_path(str(path))
    try:
        data = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON at line {err.lineno}: {err.msg}") from None
    return parse_config(data)
