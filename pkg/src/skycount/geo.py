"""Coordinate handling and the road filter.

Detections are kept only if at least one corner of their bounding box lies
within the road's filter radius of the centerline. All geometry runs in a
local equirectangular projection about the polyline's first vertex, which is
accurate to well under 0.5% at highway-scene scales.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidCoordinateError

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_FILTER_RADIUS_M = 8.0
# Road data centered on a single lane needs a wider corridor so both
# directions pass the filter.
SINGLE_LANE_FILTER_RADIUS_M = 40.0

_DEG = np.pi / 180.0


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 coordinate in degrees."""

    lon: float
    lat: float

    def __post_init__(self):
        if not (-180.0 <= self.lon <= 180.0 and -90.0 <= self.lat <= 90.0):
            raise InvalidCoordinateError(
                f"coordinate out of range: lon={self.lon}, lat={self.lat}"
            )


@dataclass(frozen=True)
class PlanarPoint:
    """Meters east/north of a projection origin."""

    x: float
    y: float


@dataclass(frozen=True)
class GeoBox:
    """Georeferenced quadrilateral detection box.

    score is the detector confidence; ground-truth boxes carry None.
    """

    corners: tuple[GeoPoint, GeoPoint, GeoPoint, GeoPoint]
    score: float | None = None
    image_id: str = ""
    class_label: str = "Truck"

    def __post_init__(self):
        if len(self.corners) != 4:
            raise ValueError(f"GeoBox needs exactly 4 corners, got {len(self.corners)}")
        object.__setattr__(self, "corners", tuple(self.corners))
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class RoadPolyline:
    """Highway centerline with the road-filter radius."""

    vertices: tuple[GeoPoint, ...]
    filter_radius_m: float = DEFAULT_FILTER_RADIUS_M
    road_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        if len(self.vertices) < 2:
            raise ValueError("polyline needs at least 2 vertices")
        for a, b in zip(self.vertices, self.vertices[1:]):
            if a.lon == b.lon and a.lat == b.lat:
                raise ValueError("consecutive polyline vertices must differ")
        if not self.filter_radius_m > 0:
            raise ValueError(f"filter_radius_m must be > 0, got {self.filter_radius_m}")


def dedupe_vertices(points: list[GeoPoint]) -> list[GeoPoint]:
    """Drop consecutive duplicate vertices (common in shapefile exports)."""
    out: list[GeoPoint] = []
    for p in points:
        if not out or out[-1].lon != p.lon or out[-1].lat != p.lat:
            out.append(p)
    return out


def project_local(origin: GeoPoint, p: GeoPoint) -> PlanarPoint:
    """Equirectangular projection of p about origin, in meters east/north."""
    x = (p.lon - origin.lon) * _DEG * EARTH_RADIUS_M * np.cos(origin.lat * _DEG)
    y = (p.lat - origin.lat) * _DEG * EARTH_RADIUS_M
    return PlanarPoint(float(x), float(y))


def _project_array(origin: GeoPoint, lons, lats):
    """Vectorized project_local: returns an (n, 2) array of meters."""
    lons = np.asarray(lons, dtype=np.float64)
    lats = np.asarray(lats, dtype=np.float64)
    x = (lons - origin.lon) * _DEG * EARTH_RADIUS_M * np.cos(origin.lat * _DEG)
    y = (lats - origin.lat) * _DEG * EARTH_RADIUS_M
    return np.column_stack([x, y])


def _polyline_xy(road: RoadPolyline) -> np.ndarray:
    origin = road.vertices[0]
    return _project_array(
        origin, [v.lon for v in road.vertices], [v.lat for v in road.vertices]
    )


def dist_point_polyline(p: PlanarPoint, line_xy: np.ndarray) -> float:
    """Exact point-to-polyline distance in the projected plane (meters)."""
    pts = np.array([[p.x, p.y]])
    return float(_kernels.polyline_min_dist(pts, np.asarray(line_xy, dtype=np.float64))[0])


def box_road_distances(boxes: list[GeoBox], road: RoadPolyline) -> np.ndarray:
    """Per-box minimum corner distance to the road centerline, meters."""
    if not boxes:
        return np.empty(0)
    origin = road.vertices[0]
    lons = [c.lon for b in boxes for c in b.corners]
    lats = [c.lat for b in boxes for c in b.corners]
    corners_xy = _project_array(origin, lons, lats)
    d = _kernels.polyline_min_dist(corners_xy, _polyline_xy(road))
    return d.reshape(len(boxes), 4).min(axis=1)


def road_filter(boxes: list[GeoBox], road: RoadPolyline) -> list[GeoBox]:
    """Keep boxes with at least one corner within filter_radius_m of the road.

    The threshold is inclusive and the filter is applied identically to
    predictions and ground truth; input order is preserved.
    """
    if not boxes:
        return []
    dmin = box_road_distances(boxes, road)
    return [b for b, d in zip(boxes, dmin) if d <= road.filter_radius_m]
