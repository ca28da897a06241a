"""Lane polygons from MAP messages and lane-level spatial matching.

A MAP's node paths become centerlines in a local planar frame (meters,
x east / y north, origin at the MAP reference point). Each lane gets a
boundary polygon by offsetting the centerline by half the lane width, a
convex hull for containment tests, and a stop-line segment across node[0].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .messages import MapMessage

EARTH_RADIUS_M = 6371008.8
MATCH_RADIUS_M = 500.0


class DegenerateLane(ValueError):
    """Consecutive duplicate nodes leave no segment direction."""


class CollinearInput(ValueError):
    """A convex hull needs at least 3 non-collinear points."""


@dataclass
class LocalFrame:
    """Equirectangular projection around an origin; good to <1 cm within 2 km."""

    origin_lat_deg: float
    origin_lon_deg: float

    def to_xy(self, lat_deg: float, lon_deg: float) -> tuple[float, float]:
        x = (EARTH_RADIUS_M * math.radians(lon_deg - self.origin_lon_deg)
             * math.cos(math.radians(self.origin_lat_deg)))
        y = EARTH_RADIUS_M * math.radians(lat_deg - self.origin_lat_deg)
        return x, y

    def to_latlon(self, x: float, y: float) -> tuple[float, float]:
        lat = self.origin_lat_deg + math.degrees(y / EARTH_RADIUS_M)
        lon = self.origin_lon_deg + math.degrees(
            x / (EARTH_RADIUS_M * math.cos(math.radians(self.origin_lat_deg))))
        return lat, lon


@dataclass
class LanePolygon:
    intersection_id: int
    lane_id: int
    signal_group_id: int
    centerline: list[tuple[float, float]]  # meters, node[0] at the stop line
    boundary: list[tuple[float, float]]
    hull: list[tuple[float, float]]  # counterclockwise
    stop_line: tuple[tuple[float, float], tuple[float, float]]
    direction_deg: float  # bearing of travel, toward the stop line


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> list[tuple[float, float]]:
    """Monotone-chain hull, counterclockwise, collinear points excluded."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) < 3:
        raise CollinearInput("need at least 3 distinct points")
    lower = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise CollinearInput("all points collinear")
    return hull


def point_in_convex(point, hull, eps: float = 1e-9) -> bool:
    """Closed containment in a counterclockwise convex polygon."""
    n = len(hull)
    for i in range(n):
        if _cross(hull[i], hull[(i + 1) % n], point) < -eps:
            return False
    return True


def _point_segment_distance(p, a, b) -> float:
    ax, ay = a
    vx, vy = b[0] - ax, b[1] - ay
    seg_len2 = vx * vx + vy * vy
    if seg_len2 == 0.0:
        return math.hypot(p[0] - ax, p[1] - ay)
    t = ((p[0] - ax) * vx + (p[1] - ay) * vy) / seg_len2
    t = max(0.0, min(1.0, t))
    return math.hypot(p[0] - (ax + t * vx), p[1] - (ay + t * vy))


def _offset_points(centerline, half_width):
    """Perpendicular offsets per vertex (miter joins at interior vertices)."""
    dirs = []
    for (x0, y0), (x1, y1) in zip(centerline, centerline[1:]):
        dx, dy = x1 - x0, y1 - y0
        norm = math.hypot(dx, dy)
        if norm == 0.0:
            raise DegenerateLane("consecutive duplicate nodes")
        dirs.append((dx / norm, dy / norm))
    left, right = [], []
    for i, pt in enumerate(centerline):
        if i == 0:
            dx, dy = dirs[0]
        elif i == len(centerline) - 1:
            dx, dy = dirs[-1]
        else:
            sx, sy = dirs[i - 1][0] + dirs[i][0], dirs[i - 1][1] + dirs[i][1]
            norm = math.hypot(sx, sy)
            if norm < 1e-12:  # 180-degree fold
                raise DegenerateLane("centerline folds back on itself")
            dx, dy = sx / norm, sy / norm
            # widen the miter so the boundary edges stay tangent
            half = half_width / max(dirs[i - 1][0] * dx + dirs[i - 1][1] * dy, 1e-6)
            left.append((pt[0] - dy * half, pt[1] + dx * half))
            right.append((pt[0] + dy * half, pt[1] - dx * half))
            continue
        left.append((pt[0] - dy * half_width, pt[1] + dx * half_width))
        right.append((pt[0] + dy * half_width, pt[1] - dx * half_width))
    return left, right


def build_lane_polygons(map_msg: MapMessage) -> list[LanePolygon]:
    """One LanePolygon per lane of a validated MAP."""
    polys = []
    half_width = map_msg.lane_width_cm / 200.0  # cm -> m, then halved
    for lane in map_msg.lanes:
        centerline = [(dx / 100.0, dy / 100.0) for dx, dy in lane.nodes]
        left, right = _offset_points(centerline, half_width)
        boundary = right + list(reversed(left))
        hull = convex_hull(boundary)
        stop_line = (left[0], right[0])
        bx, by = (centerline[0][0] - centerline[1][0],
                  centerline[0][1] - centerline[1][1])
        direction = math.degrees(math.atan2(bx, by)) % 360.0
        polys.append(LanePolygon(
            intersection_id=map_msg.intersection_id,
            lane_id=lane.lane_id,
            signal_group_id=lane.signal_group_id,
            centerline=centerline,
            boundary=boundary,
            hull=hull,
            stop_line=stop_line,
            direction_deg=direction,
        ))
    return polys


def point_in_lane(point_xy, lane: LanePolygon, use_hull: bool = True) -> bool:
    """Containment test; hull-based by default, ray casting on the raw
    boundary when use_hull is False (tighter on curved lanes)."""
    if use_hull:
        return point_in_convex(point_xy, lane.hull)
    return _ray_cast(point_xy, lane.boundary)


def _ray_cast(point, polygon, eps: float = 1e-9) -> bool:
    # on-edge counts as inside, matching the hull convention
    x, y = point
    n = len(polygon)
    inside = False
    for i in range(n):
        (x0, y0), (x1, y1) = polygon[i], polygon[(i + 1) % n]
        if _point_segment_distance(point, (x0, y0), (x1, y1)) <= eps:
            return True
        if (y0 > y) != (y1 > y):
            t = (y - y0) / (y1 - y0)
            if x < x0 + t * (x1 - x0):
                inside = not inside
    return inside


def distance_to_stop_line(position_xy, lane: LanePolygon) -> float:
    """Euclidean meters from a point to the lane's stop-line segment."""
    return _point_segment_distance(position_xy, *lane.stop_line)


def _distance_to_centerline(point, centerline) -> float:
    return min(_point_segment_distance(point, a, b)
               for a, b in zip(centerline, centerline[1:]))


@dataclass
class LaneIndex:
    """Lane polygons for every cached MAP, keyed for matching and lookup."""

    frames: dict[int, LocalFrame] = field(default_factory=dict)
    ref_points: dict[int, tuple[float, float]] = field(default_factory=dict)
    lanes: dict[int, list[LanePolygon]] = field(default_factory=dict)
    use_hull: bool = True

    def add_map(self, map_msg: MapMessage) -> None:
        lat, lon, _ = map_msg.ref_point
        self.frames[map_msg.intersection_id] = LocalFrame(lat, lon)
        self.ref_points[map_msg.intersection_id] = (lat, lon)
        self.lanes[map_msg.intersection_id] = build_lane_polygons(map_msg)

    def lane(self, intersection_id: int, lane_id: int) -> Optional[LanePolygon]:
        for lp in self.lanes.get(intersection_id, []):
            if lp.lane_id == lane_id:
                return lp
        return None

    def nearest_intersection(self, lat_deg: float, lon_deg: float,
                             radius_m: float = MATCH_RADIUS_M):
        """(intersection_id, distance_m) of the closest ref point in range."""
        best = None
        for iid, frame in self.frames.items():
            x, y = frame.to_xy(lat_deg, lon_deg)
            d = math.hypot(x, y)
            if d <= radius_m and (best is None or d < best[1]):
                best = (iid, d)
        return best

    def match(self, lat_deg: float, lon_deg: float):
        """Matched (intersection_id, lane_id, signal_group_id) or None.

        Only lanes of the nearest intersection are tested; overlapping
        matches are broken by distance to the centerline.
        """
        near = self.nearest_intersection(lat_deg, lon_deg)
        if near is None:
            return None
        iid = near[0]
        point = self.frames[iid].to_xy(lat_deg, lon_deg)
        hits = [lp for lp in self.lanes[iid]
                if point_in_lane(point, lp, use_hull=self.use_hull)]
        if not hits:
            return None
        if len(hits) > 1:
            hits.sort(key=lambda lp: (_distance_to_centerline(point, lp.centerline),
                                      lp.lane_id))
        lp = hits[0]
        return lp.intersection_id, lp.lane_id, lp.signal_group_id

    def position_xy(self, intersection_id: int,
                    lat_deg: float, lon_deg: float) -> tuple[float, float]:
        return self.frames[intersection_id].to_xy(lat_deg, lon_deg)


def match_lane(position_latlon, maps) -> Optional[tuple[int, int, int]]:
    """One-shot lane match over a list of MapMessages."""
    index = LaneIndex()
    for m in maps:
        index.add_map(m)
    return index.match(position_latlon[0], position_latlon[1])


def lanes_geojson(index: LaneIndex) -> dict:
    """FeatureCollection: one Polygon per lane plus its stop-line LineString."""
    features = []
    for iid, lanes in sorted(index.lanes.items()):
        frame = index.frames[iid]
        for lp in lanes:
            ring = [list(reversed(frame.to_latlon(x, y)))  # GeoJSON wants lon,lat
                    for x, y in lp.boundary]
            ring.append(ring[0])
            features.append({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {
                    "intersection_id": iid,
                    "lane_id": lp.lane_id,
                    "signal_group_id": lp.signal_group_id,
                },
            })
            stop = [list(reversed(frame.to_latlon(x, y))) for x, y in lp.stop_line]
            features.append({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": stop},
                "properties": {
                    "intersection_id": iid,
                    "lane_id": lp.lane_id,
                    "kind": "stop_line",
                },
            })
    return {"type": "FeatureCollection", "features": features}
