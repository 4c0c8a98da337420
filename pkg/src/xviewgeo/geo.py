"""GPS coordinates, local equirectangular projection and distances."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptySelectionError, InvalidCoordinateError

EARTH_RADIUS_M = 6_371_000.0
_WARN_RADIUS_M = 100_000.0


@dataclass(frozen=True)
class GpsCoord:
    lat: float
    lon: float

    def __post_init__(self):
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise InvalidCoordinateError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= lat <= 90.0:
            raise InvalidCoordinateError(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise InvalidCoordinateError(f"longitude {lon} outside [-180, 180]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)


@dataclass(frozen=True)
class LocalXY:
    """Meters east (x) and north (y) of ``anchor``."""

    x: float
    y: float
    anchor: GpsCoord


def project(p: GpsCoord, anchor: GpsCoord) -> LocalXY:
    """Equirectangular projection of ``p`` into a tangent frame at ``anchor``.

    Accurate to well under a meter over a few kilometers; a warning is
    emitted when the point is more than 100 km from the anchor.
    """
    cos_lat = math.cos(math.radians(anchor.lat))
    x = EARTH_RADIUS_M * cos_lat * math.radians(p.lon - anchor.lon)
    y = EARTH_RADIUS_M * math.radians(p.lat - anchor.lat)
    if math.hypot(x, y) > _WARN_RADIUS_M:
        warnings.warn(
            f"projecting a point {math.hypot(x, y) / 1000:.0f} km from its anchor; "
            "equirectangular error grows with distance",
            stacklevel=2,
        )
    return LocalXY(x, y, anchor)


def unproject(p: LocalXY) -> GpsCoord:
    if not (math.isfinite(p.x) and math.isfinite(p.y)):
        raise InvalidCoordinateError(f"non-finite local coordinate ({p.x}, {p.y})")
    cos_lat = math.cos(math.radians(p.anchor.lat))
    lat = p.anchor.lat + math.degrees(p.y / EARTH_RADIUS_M)
    lon = p.anchor.lon + math.degrees(p.x / (EARTH_RADIUS_M * cos_lat))
    return GpsCoord(lat, lon)


def geo_distance_m(a: GpsCoord, b: GpsCoord) -> float:
    """Planar distance in meters, measured in a frame anchored at the midpoint.

    Both points are projected with the same anchor, so the result is
    symmetric in its arguments.
    """
    mid = GpsCoord((a.lat + b.lat) / 2.0, (a.lon + b.lon) / 2.0)
    cos_lat = math.cos(math.radians(mid.lat))
    dx = EARTH_RADIUS_M * cos_lat * math.radians(a.lon - b.lon)
    dy = EARTH_RADIUS_M * math.radians(a.lat - b.lat)
    return math.hypot(dx, dy)


def pairwise_distance_m(lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    """Vectorized :func:`geo_distance_m` over all pairs of points."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))):
        raise InvalidCoordinateError("non-finite coordinate in input")
    mid_lat = (lat[:, None] + lat[None, :]) / 2.0
    dx = EARTH_RADIUS_M * np.cos(np.radians(mid_lat)) * np.radians(lon[:, None] - lon[None, :])
    dy = EARTH_RADIUS_M * np.radians(lat[:, None] - lat[None, :])
    return np.hypot(dx, dy)


def mean_gps(points: Sequence[GpsCoord]) -> GpsCoord:
    """Component-wise arithmetic mean; valid for city-scale extents."""
    if len(points) == 0:
        raise EmptySelectionError("mean of an empty set of locations")
    lats = [p.lat for p in points]
    lons = [p.lon for p in points]
    # clamp guards against the last-ulp overshoot of fsum/n
    lat = min(max(math.fsum(lats) / len(lats), min(lats)), max(lats))
    lon = min(max(math.fsum(lons) / len(lons), min(lons)), max(lons))
    return GpsCoord(lat, lon)
