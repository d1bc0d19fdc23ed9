"""Spherical-earth geodesic primitives.

Distances are great-circle (haversine) on a sphere of radius
``EARTH_RADIUS_M``. Road segments are straight lines in (lat, lon) space,
parameterised so that ``alpha = 1`` is endpoint A and ``alpha = 0`` is B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import ValidationError

EARTH_RADIUS_M = 6_371_000.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValidationError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"longitude {self.lon} outside [-180, 180]")

    def __iter__(self):
        yield self.lat
        yield self.lon


@dataclass(frozen=True)
class SegmentProjection:
    alpha: float
    distance_m: float


def geodesic_distance(p1: GeoPoint, p2: GeoPoint) -> float:
    """Haversine distance in meters."""
    phi1 = math.radians(p1.lat)
    phi2 = math.radians(p2.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(p2.lon - p1.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    # rounding can push h a hair above 1 for antipodal points
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(min(1.0, h)))


def interpolate(seg_a: GeoPoint, seg_b: GeoPoint, alpha: float) -> GeoPoint:
    """Point ``alpha * A + (1 - alpha) * B`` on the segment, in coordinate space."""
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha={alpha} outside [0, 1]")
    if alpha == 1.0:
        return seg_a
    if alpha == 0.0:
        return seg_b
    return GeoPoint(
        alpha * seg_a.lat + (1.0 - alpha) * seg_b.lat,
        alpha * seg_a.lon + (1.0 - alpha) * seg_b.lon,
    )


def _wrap_dlon(dlon):
    return (dlon + 180.0) % 360.0 - 180.0


def local_xy(p: GeoPoint, origin: GeoPoint, cos_lat: float):
    """Equirectangular (east, north) offset of ``p`` from ``origin`` in meters."""
    x = math.radians(_wrap_dlon(p.lon - origin.lon)) * EARTH_RADIUS_M * cos_lat
    y = math.radians(p.lat - origin.lat) * EARTH_RADIUS_M
    return x, y


def offset_point(origin: GeoPoint, east_m: float, north_m: float) -> GeoPoint:
    """Inverse of :func:`local_xy` around ``origin``."""
    lat = origin.lat + math.degrees(north_m / EARTH_RADIUS_M)
    lon = origin.lon + math.degrees(east_m / (EARTH_RADIUS_M * math.cos(math.radians(origin.lat))))
    return GeoPoint(lat, _wrap_dlon(lon))


def destination(origin: GeoPoint, bearing_deg: float, distance_m: float) -> GeoPoint:
    """Great-circle destination from ``origin`` along an initial bearing."""
    delta = distance_m / EARTH_RADIUS_M
    theta = math.radians(bearing_deg)
    phi1 = math.radians(origin.lat)
    lmb1 = math.radians(origin.lon)
    sin_phi2 = math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta)
    phi2 = math.asin(max(-1.0, min(1.0, sin_phi2)))
    lmb2 = lmb1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * sin_phi2,
    )
    return GeoPoint(math.degrees(phi2), _wrap_dlon(math.degrees(lmb2)))


def point_to_segment_distance(p: GeoPoint, seg_a: GeoPoint, seg_b: GeoPoint) -> SegmentProjection:
    """Distance from ``p`` to the segment A-B and the minimizing ``alpha``.

    When the perpendicular foot of ``p`` falls strictly inside the segment
    (both interior angles of triangle p-A-B at A and at B are acute), the
    foot is found by planar projection in a local equirectangular frame
    centred on the segment midpoint. Otherwise the nearer endpoint is
    returned with alpha clamped to 1 (A) or 0 (B).
    """
    if seg_a == seg_b:
        raise ValidationError("zero-length segment")
    mid_lat = 0.5 * (seg_a.lat + seg_b.lat)
    origin = GeoPoint(mid_lat, seg_a.lon)
    cos_lat = math.cos(math.radians(mid_lat))
    ax, ay = local_xy(seg_a, origin, cos_lat)
    bx, by = local_xy(seg_b, origin, cos_lat)
    px, py = local_xy(p, origin, cos_lat)
    ux, uy = bx - ax, by - ay
    norm2 = ux * ux + uy * uy
    if norm2 == 0.0:
        raise ValidationError("zero-length segment")
    # t runs from A (0) to B (1); alpha is its complement
    t = ((px - ax) * ux + (py - ay) * uy) / norm2

    d_a = geodesic_distance(p, seg_a)
    d_b = geodesic_distance(p, seg_b)
    best = SegmentProjection(1.0, d_a) if d_a <= d_b else SegmentProjection(0.0, d_b)
    if 0.0 < t < 1.0:
        alpha = 1.0 - t
        d = geodesic_distance(p, interpolate(seg_a, seg_b, alpha))
        if d < best.distance_m:
            best = SegmentProjection(alpha, d)
    return best
