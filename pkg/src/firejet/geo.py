"""Coordinate frames: WGS84 geodetic points, local ENU, and compass poses.

All geometry in the stack runs in a local East-North-Up frame anchored at a
per-scenario geodetic origin. Conversion is flat-earth with a fixed
meters-per-degree constant; scenario extents stay well under 2 km so the
approximation error is below 2 cm. Yaw follows compass convention
(0 = North, clockwise positive) everywhere, because both the UAV and the
monitor are GNSS devices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import OutOfTangentRange

# Meters per degree of latitude (and of longitude at the equator).
M_PER_DEG = 111_319.4908

# Max angular offset from the frame origin for which the flat-earth
# conversion is accepted.
TANGENT_RANGE_DEG = 1.0


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 position; lat/lon in degrees, alt in meters above ellipsoid."""

    lat: float
    lon: float
    alt: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"lat {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon < 180.0:
            raise ValueError(f"lon {self.lon} outside [-180, 180)")


@dataclass(frozen=True)
class EnuPoint:
    """Point in the local East-North-Up frame, meters."""

    e: float
    n: float
    u: float = 0.0

    def __add__(self, other: "EnuPoint") -> "EnuPoint":
        return EnuPoint(self.e + other.e, self.n + other.n, self.u + other.u)

    def __sub__(self, other: "EnuPoint") -> "EnuPoint":
        return EnuPoint(self.e - other.e, self.n - other.n, self.u - other.u)

    def scaled(self, k: float) -> "EnuPoint":
        return EnuPoint(self.e * k, self.n * k, self.u * k)

    def norm(self) -> float:
        return math.sqrt(self.e**2 + self.n**2 + self.u**2)

    def horizontal_norm(self) -> float:
        return math.hypot(self.e, self.n)

    def distance_to(self, other: "EnuPoint") -> float:
        return (self - other).norm()

    def horizontal_distance_to(self, other: "EnuPoint") -> float:
        return math.hypot(self.e - other.e, self.n - other.n)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.e, self.n, self.u)


@dataclass(frozen=True)
class Pose:
    """Position plus compass yaw [0, 360) and pitch [-90, 90] in degrees."""

    position: EnuPoint
    yaw: float = 0.0
    pitch: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", self.yaw % 360.0)
        if not -90.0 <= self.pitch <= 90.0:
            raise ValueError(f"pitch {self.pitch} outside [-90, 90]")

    def forward(self) -> EnuPoint:
        """Unit vector along (yaw, pitch): compass yaw, pitch above horizon."""
        yaw_r = math.radians(self.yaw)
        pitch_r = math.radians(self.pitch)
        ch = math.cos(pitch_r)
        return EnuPoint(ch * math.sin(yaw_r), ch * math.cos(yaw_r), math.sin(pitch_r))


def geo_to_enu(p: GeoPoint, origin: GeoPoint) -> EnuPoint:
    """Flat-earth conversion of a geodetic point into the local ENU frame."""
    dlat = p.lat - origin.lat
    dlon = p.lon - origin.lon
    if abs(dlat) >= TANGENT_RANGE_DEG or abs(dlon) >= TANGENT_RANGE_DEG:
        raise OutOfTangentRange(
            f"point ({p.lat}, {p.lon}) more than {TANGENT_RANGE_DEG} deg from origin"
        )
    e = dlon * math.cos(math.radians(origin.lat)) * M_PER_DEG
    n = dlat * M_PER_DEG
    return EnuPoint(e, n, p.alt - origin.alt)


def enu_to_geo(p: EnuPoint, origin: GeoPoint) -> GeoPoint:
    """Exact inverse of :func:`geo_to_enu` for in-range points."""
    lat = origin.lat + p.n / M_PER_DEG
    lon = origin.lon + p.e / (math.cos(math.radians(origin.lat)) * M_PER_DEG)
    return GeoPoint(lat, lon, origin.alt + p.u)


def wrap_deg(angle: float) -> float:
    """Wrap an angle to [0, 360)."""
    return angle % 360.0


def shortest_arc_deg(target: float, current: float) -> float:
    """Signed shortest angular difference target - current, in (-180, 180]."""
    d = (target - current) % 360.0
    if d > 180.0:
        d -= 360.0
    return d


def bearing_deg(src: EnuPoint, dst: EnuPoint) -> float:
    """Compass bearing from src to dst (0 = North, clockwise)."""
    return math.degrees(math.atan2(dst.e - src.e, dst.n - src.n)) % 360.0


def look_at(src: EnuPoint, dst: EnuPoint) -> Pose:
    """Pose at src whose yaw/pitch point exactly at dst."""
    d = dst - src
    yaw = math.degrees(math.atan2(d.e, d.n)) % 360.0
    pitch = math.degrees(math.atan2(d.u, d.horizontal_norm()))
    return Pose(position=src, yaw=yaw, pitch=pitch)
