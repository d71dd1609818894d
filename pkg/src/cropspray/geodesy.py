"""WGS-84 conversions between geodetic (LLH), ECEF and local ENU frames."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# WGS-84 ellipsoid
SEMI_MAJOR_M = 6378137.0
FLATTENING = 1.0 / 298.257223563
SEMI_MINOR_M = SEMI_MAJOR_M * (1.0 - FLATTENING)
E2 = FLATTENING * (2.0 - FLATTENING)  # first eccentricity squared
EP2 = E2 / (1.0 - E2)  # second eccentricity squared

LAT_TOL_RAD = 1e-12
MAX_ITERATIONS = 20


class ConvergenceError(ArithmeticError):
    """Raised when the ECEF->LLH iteration fails to settle."""


def normalize_longitude(lon_deg: float) -> float:
    """Wrap a longitude into the half-open interval (-180, 180]."""
    lon = math.fmod(lon_deg, 360.0)
    if lon > 180.0:
        lon -= 360.0
    elif lon <= -180.0:
        lon += 360.0
    return lon


@dataclass(frozen=True)
class GeodeticCoord:
    latitude_deg: float
    longitude_deg: float
    height_m: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise ValueError(f"latitude {self.latitude_deg} outside [-90, 90]")
        object.__setattr__(self, "longitude_deg", normalize_longitude(self.longitude_deg))


@dataclass(frozen=True)
class EcefCoord:
    x_m: float
    y_m: float
    z_m: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x_m, self.y_m, self.z_m])


@dataclass(frozen=True)
class EnuCoord:
    east_m: float
    north_m: float
    up_m: float = 0.0

    def __post_init__(self):
        if not all(map(math.isfinite, (self.east_m, self.north_m, self.up_m))):
            raise ValueError("ENU coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.east_m, self.north_m, self.up_m])


def llh_to_ecef(g: GeodeticCoord) -> EcefCoord:
    lat = math.radians(g.latitude_deg)
    lon = math.radians(g.longitude_deg)
    sin_lat, cos_lat = math.sin(lat), math.cos(lat)
    n = SEMI_MAJOR_M / math.sqrt(1.0 - E2 * sin_lat * sin_lat)
    return EcefCoord(
        (n + g.height_m) * cos_lat * math.cos(lon),
        (n + g.height_m) * cos_lat * math.sin(lon),
        (n * (1.0 - E2) + g.height_m) * sin_lat,
    )


def _height(p: float, z: float, lat: float) -> float:
    sin_lat, cos_lat = math.sin(lat), math.cos(lat)
    n = SEMI_MAJOR_M / math.sqrt(1.0 - E2 * sin_lat * sin_lat)
    # Pick the better-conditioned expression for the current latitude.
    if abs(cos_lat) > 0.5:
        return p / cos_lat - n
    return z / sin_lat - n * (1.0 - E2)


def ecef_to_llh(e: EcefCoord) -> GeodeticCoord:
    """Invert :func:`llh_to_ecef`.

    Bowring's closed form seeds a fixed-point iteration on latitude that runs
    until successive estimates differ by less than ``LAT_TOL_RAD``.
    """
    x, y, z = e.x_m, e.y_m, e.z_m
    p = math.hypot(x, y)
    if p == 0.0 and z == 0.0:
        raise ValueError("ECEF point at Earth's center has no geodetic position")
    lon = math.atan2(y, x)

    if p == 0.0:
        lat = math.copysign(math.pi / 2, z)
        return GeodeticCoord(math.degrees(lat), math.degrees(lon), abs(z) - SEMI_MINOR_M)

    beta = math.atan2(SEMI_MAJOR_M * z, SEMI_MINOR_M * p)
    lat = math.atan2(
        z + EP2 * SEMI_MINOR_M * math.sin(beta) ** 3,
        p - E2 * SEMI_MAJOR_M * math.cos(beta) ** 3,
    )
    for _ in range(MAX_ITERATIONS):
        h = _height(p, z, lat)
        sin_lat = math.sin(lat)
        n = SEMI_MAJOR_M / math.sqrt(1.0 - E2 * sin_lat * sin_lat)
        new_lat = math.atan2(z, p * (1.0 - E2 * n / (n + h)))
        if abs(new_lat - lat) < LAT_TOL_RAD:
            lat = new_lat
            break
        lat = new_lat
    else:
        raise ConvergenceError(f"latitude did not converge for {e}")

    return GeodeticCoord(math.degrees(lat), math.degrees(lon), _height(p, z, lat))


def _enu_rotation(lat_deg: float, lon_deg: float) -> np.ndarray:
    lat = math.radians(lat_deg)
    lon = math.radians(lon_deg)
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    return np.array(
        [
            [-so, co, 0.0],
            [-sl * co, -sl * so, cl],
            [cl * co, cl * so, sl],
        ]
    )


@dataclass(frozen=True)
class Datum:
    """Local tangent-plane anchor; caches the ECEF origin and ECEF->ENU rotation."""

    origin: GeodeticCoord
    rotation: np.ndarray = field(init=False, repr=False, compare=False)
    origin_ecef: EcefCoord = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rot = _enu_rotation(self.origin.latitude_deg, self.origin.longitude_deg)
        rot.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "origin_ecef", llh_to_ecef(self.origin))

    @classmethod
    def from_ecef(cls, e: EcefCoord) -> Datum:
        return cls(ecef_to_llh(e))


def ecef_to_enu(e: EcefCoord, d: Datum) -> EnuCoord:
    delta = e.as_array() - d.origin_ecef.as_array()
    east, north, up = d.rotation @ delta
    return EnuCoord(float(east), float(north), float(up))


def enu_to_ecef(p: EnuCoord, d: Datum) -> EcefCoord:
    x, y, z = d.rotation.T @ p.as_array() + d.origin_ecef.as_array()
    return EcefCoord(float(x), float(y), float(z))


def llh_to_enu(g: GeodeticCoord, d: Datum) -> EnuCoord:
    return ecef_to_enu(llh_to_ecef(g), d)


def enu_to_llh(p: EnuCoord, d: Datum) -> GeodeticCoord:
    return ecef_to_llh(enu_to_ecef(p, d))
