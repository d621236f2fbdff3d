"""Geo-poses, SE(2) pose algebra and the local metric frame.

Geo-poses (latitude, longitude, bearing) are mapped into a planar east-north
frame centered on an origin pose using a spherical Mercator projection scaled
by ``cos(latitude_origin)``, so one local unit is one meter at the origin.

Bearing is measured clockwise from north; local yaw counterclockwise from
east, ``yaw = pi/2 - bearing``. Local pose rotations are relative to the
origin's yaw, so the origin maps to the identity pose.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS = 6378137.0
MAX_LATITUDE = 85.0


class GeodesyError(ValueError):
    """Raised for geo-poses outside the projection's domain."""


def wrap_angle(angle):
    """Wrap an angle (or array of angles) to (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class GeoPose:
    latitude: float
    longitude: float
    bearing: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise GeodesyError(f"latitude {self.latitude} outside [-90, 90]")
        lon = (self.longitude + 180.0) % 360.0 - 180.0
        object.__setattr__(self, "longitude", lon)
        object.__setattr__(self, "bearing", self.bearing % 360.0)

    @property
    def yaw(self) -> float:
        """Heading counterclockwise from east, radians."""
        return wrap_angle(math.pi / 2 - math.radians(self.bearing))


@dataclass(frozen=True)
class Pose2:
    """Rigid 2-D transform ``x -> R(angle) x + (tx, ty)``."""

    angle: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "angle", wrap_angle(self.angle))

    @classmethod
    def identity(cls) -> "Pose2":
        return cls()

    @classmethod
    def from_matrix(cls, m) -> "Pose2":
        m = np.asarray(m, dtype=float)
        return cls(math.atan2(m[1, 0], m[0, 0]), m[0, 2], m[1, 2])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    @property
    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def matrix(self) -> np.ndarray:
        m = np.eye(3)
        m[:2, :2] = self.rotation
        m[:2, 2] = self.translation
        return m

    def compose(self, other: "Pose2") -> "Pose2":
        """Return ``self * other`` (apply ``other`` first)."""
        c, s = math.cos(self.angle), math.sin(self.angle)
        return Pose2(
            self.angle + other.angle,
            self.tx + c * other.tx - s * other.ty,
            self.ty + s * other.tx + c * other.ty,
        )

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.angle), math.sin(self.angle)
        return Pose2(-self.angle, -(c * self.tx + s * self.ty), s * self.tx - c * self.ty)

    def apply(self, points) -> np.ndarray:
        """Transform a 2-vector or an (n, 2) array of points."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def as_array(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.angle])

    def __matmul__(self, other: "Pose2") -> "Pose2":
        return self.compose(other)


def compose(a: Pose2, b: Pose2) -> Pose2:
    return a.compose(b)


def invert(a: Pose2) -> Pose2:
    return a.inverse()


def apply(a: Pose2, pt) -> np.ndarray:
    return a.apply(pt)


def _mercator(lat_deg, lon_deg):
    lat = np.radians(lat_deg)
    return EARTH_RADIUS * np.radians(lon_deg), EARTH_RADIUS * np.log(np.tan(np.pi / 4 + lat / 2))


def _inverse_mercator(x, y):
    lat = 2 * np.arctan(np.exp(y / EARTH_RADIUS)) - np.pi / 2
    return np.degrees(lat), np.degrees(x / EARTH_RADIUS)


def haversine(lat1, lon1, lat2, lon2, radius: float = EARTH_RADIUS):
    """Great-circle distance in meters between points given in degrees."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(lon2) - np.radians(lon1)
    h = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * radius * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


@dataclass(frozen=True)
class LocalFrame:
    """Locally metric east-north frame centered on ``origin``.

    With ``conformal_correction`` the scaled Mercator plane is additionally
    passed through the conformal map ``w -> w + i*tan(lat0)/(2R) * w**2``
    (complex coordinates), which cancels the first-order scale variation of
    Mercator away from the origin. Distances then agree with great-circle
    distances to ~1e-7 relative within a few kilometers, instead of ~2e-4 at
    mid latitudes. Headings are corrected by the local grid convergence.
    """

    origin: GeoPose
    conformal_correction: bool = True

    def __post_init__(self):
        if abs(self.origin.latitude) > MAX_LATITUDE:
            raise GeodesyError(f"origin latitude {self.origin.latitude} outside Mercator validity")

    @property
    def meters_per_mercator_unit(self) -> float:
        return math.cos(math.radians(self.origin.latitude))

    @property
    def _curvature(self) -> complex:
        if not self.conformal_correction:
            return 0j
        return 1j * math.tan(math.radians(self.origin.latitude)) / (2 * EARTH_RADIUS)

    def _forward(self, lat, lon):
        x0, y0 = _mercator(self.origin.latitude, self.origin.longitude)
        x, y = _mercator(lat, lon)
        dx = x - x0
        # longitudes wrap; keep the short way around the antimeridian
        dx = (dx + math.pi * EARTH_RADIUS) % (2 * math.pi * EARTH_RADIUS) - math.pi * EARTH_RADIUS
        w = self.meters_per_mercator_unit * (dx + 1j * (y - y0))
        b = self._curvature
        return w + b * w * w, 1 + 2 * b * w

    def _backward(self, z):
        b = self._curvature
        if b == 0:
            w = z
        else:
            # root of b*w^2 + w - z = 0 that tends to z as b -> 0
            w = 2 * z / (1 + np.sqrt(1 + 4 * b * z))
        x0, y0 = _mercator(self.origin.latitude, self.origin.longitude)
        w = w / self.meters_per_mercator_unit
        lat, lon = _inverse_mercator(x0 + w.real, y0 + w.imag)
        return lat, lon, 1 + 2 * b * (w * self.meters_per_mercator_unit)

    def geo_to_local(self, g: GeoPose) -> Pose2:
        if abs(g.latitude) > MAX_LATITUDE:
            raise GeodesyError(f"latitude {g.latitude} outside Mercator validity")
        z, dz = self._forward(g.latitude, g.longitude)
        convergence = math.atan2(dz.imag, dz.real)
        return Pose2(g.yaw + convergence - self.origin.yaw, z.real, z.imag)

    def local_to_geo(self, p: Pose2) -> GeoPose:
        lat, lon, dz = self._backward(complex(p.tx, p.ty))
        convergence = math.atan2(dz.imag, dz.real)
        yaw = p.angle + self.origin.yaw - convergence
        bearing = math.degrees(math.pi / 2 - yaw)
        return GeoPose(float(lat), float(lon), bearing)

    def to_local_points(self, lat, lon) -> np.ndarray:
        """Vectorized position-only projection; returns (n, 2) east-north meters."""
        z, _ = self._forward(np.asarray(lat, dtype=float), np.asarray(lon, dtype=float))
        return np.stack([np.real(z), np.imag(z)], axis=-1)


def geo_to_local(frame: LocalFrame, g: GeoPose) -> Pose2:
    return frame.geo_to_local(g)


def local_to_geo(frame: LocalFrame, p: Pose2) -> GeoPose:
    return frame.local_to_geo(p)
