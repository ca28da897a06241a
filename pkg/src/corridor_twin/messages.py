"""Engineering-unit domain types for the V2X message subset.

Three wire message kinds (BSM, SPaT, MAP) plus the fused IntegratedRecord.
All values here are engineering units (degrees, m/s, cm); the raw<->unit
scaling used by the wire codec lives in FIELD_SCALES so both directions
share one table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional


class Transmission(IntEnum):
    NEUTRAL = 0
    PARK = 1
    FORWARD = 2
    REVERSE = 3
    RESERVED1 = 4
    RESERVED2 = 5
    RESERVED3 = 6
    UNAVAILABLE = 7


class MovementPhaseState(IntEnum):
    UNAVAILABLE = 0
    DARK = 1
    STOP_THEN_PROCEED = 2
    STOP_AND_REMAIN = 3
    PRE_MOVEMENT = 4
    PERMISSIVE_MOVEMENT_ALLOWED = 5
    PROTECTED_MOVEMENT_ALLOWED = 6
    PERMISSIVE_CLEARANCE = 7
    PROTECTED_CLEARANCE = 8
    CAUTION_CONFLICTING_TRAFFIC = 9


# Sentinel raw values that decode to "unavailable" (surfaced as None).
SPEED_UNAVAILABLE_RAW = 8191
HEADING_UNAVAILABLE_RAW = 28800
SEC_MARK_UNAVAILABLE_RAW = 65535

TIME_MARK_UNDEFINED = 36001
MOY_MAX = 527040
D_SECOND_MAX = 60999


@dataclass
class FieldScale:
    """Raw integer <-> engineering unit scaling for one wire field.

    Exactly one of `mul`/`div` is set. `div` is used where 1/resolution is an
    exact float (1e7, 50, 80, 100): raw/div is then correctly rounded, so
    eng->raw->eng round-trips are identities.
    """

    raw_min: int
    raw_max: int
    mul: Optional[float] = None
    div: Optional[float] = None
    sentinel: Optional[int] = None

    def to_engineering(self, raw: int):
        if not self.raw_min <= raw <= self.raw_max and raw != self.sentinel:
            raise FieldRangeError(f"raw {raw} outside [{self.raw_min}, {self.raw_max}]")
        if self.sentinel is not None and raw == self.sentinel:
            return None
        if self.mul is not None:
            return raw * self.mul
        return raw / self.div

    def to_raw(self, value) -> int:
        if value is None:
            if self.sentinel is None:
                raise FieldRangeError("field has no unavailable sentinel")
            return self.sentinel
        raw = _round_half_away(value / self.mul if self.mul is not None else value * self.div)
        if not self.raw_min <= raw <= self.raw_max:
            raise FieldRangeError(f"value {value} quantizes to raw {raw} outside range")
        return raw


class FieldRangeError(ValueError):
    """Raw or engineering value outside the field's wire range."""


def _round_half_away(x: float) -> int:
    if x >= 0:
        return int(math.floor(x + 0.5))
    return -int(math.floor(-x + 0.5))


FIELD_SCALES = {
    "latitude": FieldScale(-900000000, 900000001, div=1e7),
    "longitude": FieldScale(-1799999999, 1800000001, div=1e7),
    # domain unit cm, wire unit 0.1 m
    "elevation": FieldScale(-4096, 61439, mul=10.0),
    "speed": FieldScale(0, 8190, div=50.0, sentinel=SPEED_UNAVAILABLE_RAW),
    "heading": FieldScale(0, 28799, div=80.0, sentinel=HEADING_UNAVAILABLE_RAW),
    "steering_angle": FieldScale(-126, 127, mul=1.5),
    "accel_long": FieldScale(-2000, 2001, div=100.0),
    "accel_lat": FieldScale(-2000, 2001, div=100.0),
    "accel_vert": FieldScale(-127, 127, div=50.0),
    "path_offset": FieldScale(-32768, 32767, div=1e7),
    # domain unit cm, wire unit 2 cm
    "node_offset": FieldScale(-32767, 32767, mul=2.0),
}


def raw_to_engineering(field_kind: str, raw: int):
    """Convert a raw wire integer to its engineering value (None for sentinel)."""
    return FIELD_SCALES[field_kind].to_engineering(raw)


def engineering_to_raw(field_kind: str, value) -> int:
    """Quantize an engineering value back to its raw wire integer."""
    return FIELD_SCALES[field_kind].to_raw(value)


@dataclass
class BsmCore:
    """Decoded BSM: one vehicle state sample, nominally broadcast at 10 Hz."""

    temp_id: int
    sec_mark_ms: Optional[int]
    latitude_deg: float
    longitude_deg: float
    elevation_cm: int
    speed_mps: Optional[float]
    heading_deg: Optional[float]
    steering_angle_deg: float = 0.0
    accel_long_mps2: float = 0.0
    accel_lat_mps2: float = 0.0
    accel_vert_g: float = 0.0
    brake_status: int = 0
    transmission: Transmission = Transmission.UNAVAILABLE
    width_cm: int = 0
    length_cm: int = 0
    accuracy_raw: int = 0
    path_hist: list[tuple[float, float]] = field(default_factory=list)
    path_pred: Optional[tuple[float, float]] = None

    def to_json_dict(self) -> dict:
        return {
            "msg_type": "bsm",
            "temp_id": self.temp_id,
            "sec_mark_ms": self.sec_mark_ms,
            "latitude_deg": self.latitude_deg,
            "longitude_deg": self.longitude_deg,
            "elevation_cm": self.elevation_cm,
            "speed_mps": self.speed_mps,
            "heading_deg": self.heading_deg,
            "steering_angle_deg": self.steering_angle_deg,
            "accel_long_mps2": self.accel_long_mps2,
            "accel_lat_mps2": self.accel_lat_mps2,
            "accel_vert_g": self.accel_vert_g,
            "brake_status": self.brake_status,
            "transmission": self.transmission.name.lower(),
            "width_cm": self.width_cm,
            "length_cm": self.length_cm,
            "accuracy_raw": self.accuracy_raw,
            "path_hist": [list(p) for p in self.path_hist],
            "path_pred": list(self.path_pred) if self.path_pred else None,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "BsmCore":
        return cls(
            temp_id=d["temp_id"],
            sec_mark_ms=d["sec_mark_ms"],
            latitude_deg=d["latitude_deg"],
            longitude_deg=d["longitude_deg"],
            elevation_cm=d["elevation_cm"],
            speed_mps=d["speed_mps"],
            heading_deg=d["heading_deg"],
            steering_angle_deg=d.get("steering_angle_deg", 0.0),
            accel_long_mps2=d.get("accel_long_mps2", 0.0),
            accel_lat_mps2=d.get("accel_lat_mps2", 0.0),
            accel_vert_g=d.get("accel_vert_g", 0.0),
            brake_status=d.get("brake_status", 0),
            transmission=Transmission[d.get("transmission", "unavailable").upper()],
            width_cm=d.get("width_cm", 0),
            length_cm=d.get("length_cm", 0),
            accuracy_raw=d.get("accuracy_raw", 0),
            path_hist=[tuple(p) for p in d.get("path_hist", [])],
            path_pred=tuple(d["path_pred"]) if d.get("path_pred") else None,
        )


@dataclass
class MovementState:
    """Live state of one signal group inside a SPaT message."""

    signal_group_id: int
    event_state: MovementPhaseState
    min_end_time_mark: int = TIME_MARK_UNDEFINED
    max_end_time_mark: int = TIME_MARK_UNDEFINED

    def to_json_dict(self) -> dict:
        return {
            "signal_group_id": self.signal_group_id,
            "event_state": int(self.event_state),
            "min_end_time_mark": self.min_end_time_mark,
            "max_end_time_mark": self.max_end_time_mark,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "MovementState":
        return cls(
            signal_group_id=d["signal_group_id"],
            event_state=MovementPhaseState(d["event_state"]),
            min_end_time_mark=d.get("min_end_time_mark", TIME_MARK_UNDEFINED),
            max_end_time_mark=d.get("max_end_time_mark", TIME_MARK_UNDEFINED),
        )


@dataclass
class SpatMessage:
    intersection_id: int
    moy: int
    d_second_ms: int
    movements: list[MovementState]

    def movement_for(self, signal_group_id: int) -> Optional[MovementState]:
        for m in self.movements:
            if m.signal_group_id == signal_group_id:
                return m
        return None

    def to_json_dict(self) -> dict:
        return {
            "msg_type": "spat",
            "intersection_id": self.intersection_id,
            "moy": self.moy,
            "d_second_ms": self.d_second_ms,
            "movements": [m.to_json_dict() for m in self.movements],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SpatMessage":
        return cls(
            intersection_id=d["intersection_id"],
            moy=d["moy"],
            d_second_ms=d["d_second_ms"],
            movements=[MovementState.from_json_dict(m) for m in d["movements"]],
        )


@dataclass
class LaneDescriptor:
    """One lane's node path: (dx_cm, dy_cm) planar offsets from the MAP
    reference point, node[0] at the stop line, listed outward."""

    lane_id: int
    signal_group_id: int  # 0 = unsignalized
    connecting_lane_id: int  # 0 = none
    nodes: list[tuple[int, int]]

    def to_json_dict(self) -> dict:
        return {
            "lane_id": self.lane_id,
            "signal_group_id": self.signal_group_id,
            "connecting_lane_id": self.connecting_lane_id,
            "nodes": [list(n) for n in self.nodes],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "LaneDescriptor":
        return cls(
            lane_id=d["lane_id"],
            signal_group_id=d.get("signal_group_id", 0),
            connecting_lane_id=d.get("connecting_lane_id", 0),
            nodes=[tuple(n) for n in d["nodes"]],
        )


@dataclass
class MapMessage:
    intersection_id: int
    ref_point: tuple[float, float, int]  # (lat_deg, lon_deg, elevation_cm)
    lane_width_cm: int
    lanes: list[LaneDescriptor]

    def to_json_dict(self) -> dict:
        return {
            "msg_type": "map",
            "intersection_id": self.intersection_id,
            "ref_point": list(self.ref_point),
            "lane_width_cm": self.lane_width_cm,
            "lanes": [l.to_json_dict() for l in self.lanes],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "MapMessage":
        return cls(
            intersection_id=d["intersection_id"],
            ref_point=tuple(d["ref_point"]),
            lane_width_cm=d["lane_width_cm"],
            lanes=[LaneDescriptor.from_json_dict(l) for l in d["lanes"]],
        )


@dataclass
class IntegratedRecord:
    """One BSM fused with its lane, signal group, phase state and residual."""

    timestamp_epoch_ms: int
    temp_id: int
    position: tuple[float, float, int]  # (lat_deg, lon_deg, elevation_cm)
    speed_mps: Optional[float]
    heading_deg: Optional[float]
    matched_intersection_id: Optional[int] = None
    matched_lane_id: Optional[int] = None
    signal_group_id: Optional[int] = None
    event_state: Optional[MovementPhaseState] = None
    residual_phase_ms: Optional[int] = None
    distance_to_stop_line_m: Optional[float] = None
    source_rsu_ids: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "timestamp_epoch_ms": self.timestamp_epoch_ms,
            "temp_id": self.temp_id,
            "position": list(self.position),
            "speed_mps": self.speed_mps,
            "heading_deg": self.heading_deg,
            "matched_intersection_id": self.matched_intersection_id,
            "matched_lane_id": self.matched_lane_id,
            "signal_group_id": self.signal_group_id,
            "event_state": int(self.event_state) if self.event_state is not None else None,
            "residual_phase_ms": self.residual_phase_ms,
            "distance_to_stop_line_m": self.distance_to_stop_line_m,
            "source_rsu_ids": list(self.source_rsu_ids),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "IntegratedRecord":
        ev = d.get("event_state")
        return cls(
            timestamp_epoch_ms=d["timestamp_epoch_ms"],
            temp_id=d["temp_id"],
            position=tuple(d["position"]),
            speed_mps=d["speed_mps"],
            heading_deg=d["heading_deg"],
            matched_intersection_id=d.get("matched_intersection_id"),
            matched_lane_id=d.get("matched_lane_id"),
            signal_group_id=d.get("signal_group_id"),
            event_state=MovementPhaseState(ev) if ev is not None else None,
            residual_phase_ms=d.get("residual_phase_ms"),
            distance_to_stop_line_m=d.get("distance_to_stop_line_m"),
            source_rsu_ids=list(d.get("source_rsu_ids", [])),
        )


@dataclass
class ValidationResult:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _check(violations: list[str], cond: bool, msg: str) -> None:
    if not cond:
        violations.append(msg)


def _validate_bsm(m: BsmCore, v: list[str]) -> None:
    _check(v, 0 <= m.temp_id <= 0xFFFFFFFF, "temp_id out of 32-bit range")
    _check(v, m.sec_mark_ms is None or 0 <= m.sec_mark_ms <= 59999,
           "sec_mark_ms out of range")
    _check(v, -90.0 <= m.latitude_deg <= 90.0000001, "latitude out of range")
    _check(v, -179.9999999 <= m.longitude_deg <= 180.0000001, "longitude out of range")
    _check(v, -40960 <= m.elevation_cm <= 614390, "elevation out of range")
    _check(v, m.elevation_cm % 10 == 0, "elevation not on 0.1 m wire grid")
    _check(v, m.speed_mps is None or 0.0 <= m.speed_mps <= 163.8, "speed out of range")
    _check(v, m.heading_deg is None or 0.0 <= m.heading_deg < 360.0, "heading out of range")
    _check(v, -189.0 <= m.steering_angle_deg <= 190.5, "steering angle out of range")
    _check(v, -20.0 <= m.accel_long_mps2 <= 20.01, "longitudinal accel out of range")
    _check(v, -20.0 <= m.accel_lat_mps2 <= 20.01, "lateral accel out of range")
    _check(v, -2.54 <= m.accel_vert_g <= 2.54, "vertical accel out of range")
    _check(v, 0 <= m.brake_status <= 255, "brake_status out of 8-bit range")
    _check(v, 0 <= int(m.transmission) <= 7, "transmission out of range")
    _check(v, 0 <= m.width_cm <= 1023, "width out of range")
    _check(v, 0 <= m.length_cm <= 4095, "length out of range")
    _check(v, 0 <= m.accuracy_raw <= 255, "accuracy out of 8-bit range")
    _check(v, len(m.path_hist) <= 15, "path_hist longer than 15 points")
    off = FIELD_SCALES["path_offset"]
    for dlat, dlon in list(m.path_hist) + ([m.path_pred] if m.path_pred else []):
        lo, hi = off.raw_min / 1e7, off.raw_max / 1e7
        _check(v, lo <= dlat <= hi and lo <= dlon <= hi, "path offset out of range")


def _validate_spat(m: SpatMessage, v: list[str]) -> None:
    _check(v, 0 <= m.intersection_id <= 0xFFFF, "intersection_id out of 16-bit range")
    _check(v, 0 <= m.moy <= MOY_MAX, "moy out of range")
    _check(v, 0 <= m.d_second_ms <= D_SECOND_MAX, "d_second out of range")
    _check(v, 1 <= len(m.movements) <= 15, "movement count out of range")
    groups = [mv.signal_group_id for mv in m.movements]
    _check(v, len(groups) == len(set(groups)), "duplicate signal group ids")
    for mv in m.movements:
        _check(v, 1 <= mv.signal_group_id <= 255, "signal_group_id out of range")
        _check(v, 0 <= int(mv.event_state) <= 9, "event_state out of range")
        _check(v, 0 <= mv.min_end_time_mark <= TIME_MARK_UNDEFINED, "min_end out of range")
        _check(v, 0 <= mv.max_end_time_mark <= TIME_MARK_UNDEFINED, "max_end out of range")
        if (mv.min_end_time_mark != TIME_MARK_UNDEFINED
                and mv.max_end_time_mark != TIME_MARK_UNDEFINED):
            _check(v, mv.min_end_time_mark <= mv.max_end_time_mark,
                   "min_end exceeds max_end")


def _validate_map(m: MapMessage, v: list[str]) -> None:
    _check(v, 0 <= m.intersection_id <= 0xFFFF, "intersection_id out of 16-bit range")
    lat, lon, elev = m.ref_point
    _check(v, -90.0 <= lat <= 90.0000001, "ref latitude out of range")
    _check(v, -179.9999999 <= lon <= 180.0000001, "ref longitude out of range")
    _check(v, -40960 <= elev <= 614390 and elev % 10 == 0,
           "ref elevation out of range or off 0.1 m wire grid")
    _check(v, 0 <= m.lane_width_cm <= 32767, "lane width out of range")
    _check(v, len(m.lanes) <= 63, "too many lanes")
    ids = [l.lane_id for l in m.lanes]
    _check(v, len(ids) == len(set(ids)), "duplicate lane ids")
    for lane in m.lanes:
        _check(v, 1 <= lane.lane_id <= 255, "lane_id out of range")
        _check(v, 0 <= lane.signal_group_id <= 255, "signal_group_id out of range")
        _check(v, 0 <= lane.connecting_lane_id <= 255, "connecting_lane_id out of range")
        if len(lane.nodes) < 2:
            v.append("lane needs >=2 nodes")
            continue
        _check(v, len(lane.nodes) <= 63, "too many nodes in lane")
        for dx, dy in lane.nodes:
            _check(v, -65534 <= dx <= 65534 and -65534 <= dy <= 65534,
                   "node offset out of range")
            _check(v, dx % 2 == 0 and dy % 2 == 0,
                   "node offset not on 2 cm wire grid")


def validate(message) -> ValidationResult:
    """Check a decoded message against its invariants; never mutates."""
    v: list[str] = []
    if isinstance(message, BsmCore):
        _validate_bsm(message, v)
    elif isinstance(message, SpatMessage):
        _validate_spat(message, v)
    elif isinstance(message, MapMessage):
        _validate_map(message, v)
    else:
        raise TypeError(f"not a V2X message: {type(message).__name__}")
    return ValidationResult(v)
