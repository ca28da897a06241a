"""Bit-exact encoder/decoder between hex payload strings and message types.

Wire layout (most-significant-bit first, unaligned, zero-padded to a byte
boundary; offset-binary for signed scalar fields, two's complement for the
16-bit path/node offsets):

    header     msg_type:3            1=BSM 2=SPaT 3=MAP

    BSM body   temp_id:32  sec_mark:16
               lat:31(+900000000, 1e-7 deg)  lon:32(+1799999999, 1e-7 deg)
               elev:16(+4096, 0.1 m)  speed:13(0.02 m/s, 8191=unavail)
               heading:15(0.0125 deg, 28800=unavail)
               steering:8(+126, 1.5 deg)
               accel_long:12 accel_lat:12(+2000, 0.01 m/s2)
               accel_vert:8(+127, 0.02 g)
               brake:8  transmission:3  width:10(cm)  length:12(cm)
               accuracy:8  path_hist_count:4 [dlat:16 dlon:16]*
               path_pred_present:1 [dlat:16 dlon:16]

    SPaT body  intersection:16  moy:20  d_second:16  movement_count:4
               [signal_group:8 event_state:4 min_end:16 max_end:16]*

    MAP body   intersection:16  ref_lat:31  ref_lon:32  ref_elev:16
               lane_width:15(cm)  lane_count:6
               [lane_id:8 signal_group:8 connecting:8 node_count:6
                [dx:16 dy:16 (2 cm)]*]*

The decoder rejects out-of-range fields rather than clamping, so corrupted
frames stay visible to the redundancy layer.
"""

from __future__ import annotations

from .messages import (
    BsmCore,
    LaneDescriptor,
    MapMessage,
    MovementPhaseState,
    MovementState,
    SpatMessage,
    Transmission,
    FIELD_SCALES,
    SEC_MARK_UNAVAILABLE_RAW,
    TIME_MARK_UNDEFINED,
    MOY_MAX,
    D_SECOND_MAX,
    validate,
)

MSG_TYPE_BSM = 1
MSG_TYPE_SPAT = 2
MSG_TYPE_MAP = 3


class CodecError(ValueError):
    """Base class for frame encode/decode failures."""


class UnknownMsgType(CodecError):
    pass


class Truncated(CodecError):
    pass


class NonZeroPadding(CodecError):
    pass


class FieldOutOfRange(CodecError):
    pass


class InvalidMessage(CodecError):
    """encode_frame() input failed validate()."""


class _BitWriter:
    def __init__(self):
        self._acc = 0
        self._nbits = 0

    def write(self, value: int, width: int) -> None:
        if value < 0 or value >> width:
            raise FieldOutOfRange(f"value {value} does not fit in {width} bits")
        self._acc = (self._acc << width) | value
        self._nbits += width

    def to_bytes(self) -> bytes:
        pad = (-self._nbits) % 8
        return ((self._acc << pad)).to_bytes((self._nbits + pad) // 8, "big") \
            if self._nbits else b""


class _BitReader:
    def __init__(self, data: bytes):
        self._val = int.from_bytes(data, "big")
        self._total = len(data) * 8
        self._pos = 0

    def read(self, width: int, what: str) -> int:
        if self._pos + width > self._total:
            raise Truncated(f"ran out of bits reading {what}")
        shift = self._total - self._pos - width
        self._pos += width
        return (self._val >> shift) & ((1 << width) - 1)

    def finish(self) -> None:
        rest = self._total - self._pos
        if rest >= 8:
            raise NonZeroPadding(f"{rest} trailing bits beyond the declared frame")
        if rest and (self._val & ((1 << rest) - 1)):
            raise NonZeroPadding("padding bits are not zero")


def _read_ranged(r: _BitReader, width: int, lo: int, hi: int, what: str,
                 sentinel: int | None = None) -> int:
    raw = r.read(width, what)
    if raw == sentinel:
        return raw
    if not lo <= raw <= hi:
        raise FieldOutOfRange(f"{what} raw {raw} outside [{lo}, {hi}]")
    return raw


def _read_signed16(r: _BitReader, what: str) -> int:
    raw = r.read(16, what)
    return raw - 0x10000 if raw & 0x8000 else raw


def _signed16(value: int) -> int:
    return value + 0x10000 if value < 0 else value


_S = FIELD_SCALES


def _decode_bsm(r: _BitReader) -> BsmCore:
    temp_id = r.read(32, "temp_id")
    sec_mark = _read_ranged(r, 16, 0, 59999, "sec_mark",
                            sentinel=SEC_MARK_UNAVAILABLE_RAW)
    lat = _read_ranged(r, 31, 0, 1800000001, "latitude") - 900000000
    lon = _read_ranged(r, 32, 0, 3600000000, "longitude") - 1799999999
    elev = r.read(16, "elevation") - 4096
    speed = _read_ranged(r, 13, 0, 8190, "speed", sentinel=8191)
    heading = _read_ranged(r, 15, 0, 28799, "heading", sentinel=28800)
    steering = _read_ranged(r, 8, 0, 253, "steering_angle") - 126
    accel_long = _read_ranged(r, 12, 0, 4001, "accel_long") - 2000
    accel_lat = _read_ranged(r, 12, 0, 4001, "accel_lat") - 2000
    accel_vert = _read_ranged(r, 8, 0, 254, "accel_vert") - 127
    brake = r.read(8, "brake_status")
    transmission = r.read(3, "transmission")
    width = r.read(10, "width")
    length = r.read(12, "length")
    accuracy = r.read(8, "accuracy")
    hist_count = r.read(4, "path_hist_count")
    path_hist = []
    for i in range(hist_count):
        dlat = _read_signed16(r, f"path_hist[{i}].dlat")
        dlon = _read_signed16(r, f"path_hist[{i}].dlon")
        path_hist.append((_S["path_offset"].to_engineering(dlat),
                          _S["path_offset"].to_engineering(dlon)))
    path_pred = None
    if r.read(1, "path_pred_present"):
        dlat = _read_signed16(r, "path_pred.dlat")
        dlon = _read_signed16(r, "path_pred.dlon")
        path_pred = (_S["path_offset"].to_engineering(dlat),
                     _S["path_offset"].to_engineering(dlon))
    return BsmCore(
        temp_id=temp_id,
        sec_mark_ms=None if sec_mark == SEC_MARK_UNAVAILABLE_RAW else sec_mark,
        latitude_deg=_S["latitude"].to_engineering(lat),
        longitude_deg=_S["longitude"].to_engineering(lon),
        elevation_cm=int(_S["elevation"].to_engineering(elev)),
        speed_mps=_S["speed"].to_engineering(speed),
        heading_deg=_S["heading"].to_engineering(heading),
        steering_angle_deg=_S["steering_angle"].to_engineering(steering),
        accel_long_mps2=_S["accel_long"].to_engineering(accel_long),
        accel_lat_mps2=_S["accel_lat"].to_engineering(accel_lat),
        accel_vert_g=_S["accel_vert"].to_engineering(accel_vert),
        brake_status=brake,
        transmission=Transmission(transmission),
        width_cm=width,
        length_cm=length,
        accuracy_raw=accuracy,
        path_hist=path_hist,
        path_pred=path_pred,
    )


def _decode_spat(r: _BitReader) -> SpatMessage:
    intersection = r.read(16, "intersection_id")
    moy = _read_ranged(r, 20, 0, MOY_MAX, "moy")
    d_second = _read_ranged(r, 16, 0, D_SECOND_MAX, "d_second")
    count = _read_ranged(r, 4, 1, 15, "movement_count")
    movements = []
    for i in range(count):
        sg = _read_ranged(r, 8, 1, 255, f"movements[{i}].signal_group")
        ev = _read_ranged(r, 4, 0, 9, f"movements[{i}].event_state")
        min_end = _read_ranged(r, 16, 0, TIME_MARK_UNDEFINED, f"movements[{i}].min_end")
        max_end = _read_ranged(r, 16, 0, TIME_MARK_UNDEFINED, f"movements[{i}].max_end")
        movements.append(MovementState(sg, MovementPhaseState(ev), min_end, max_end))
    return SpatMessage(intersection, moy, d_second, movements)


def _decode_map(r: _BitReader) -> MapMessage:
    intersection = r.read(16, "intersection_id")
    lat = _read_ranged(r, 31, 0, 1800000001, "ref_lat") - 900000000
    lon = _read_ranged(r, 32, 0, 3600000000, "ref_lon") - 1799999999
    elev = r.read(16, "ref_elev") - 4096
    lane_width = r.read(15, "lane_width")
    lane_count = r.read(6, "lane_count")
    lanes = []
    for i in range(lane_count):
        lane_id = _read_ranged(r, 8, 1, 255, f"lanes[{i}].lane_id")
        sg = r.read(8, f"lanes[{i}].signal_group")
        connecting = r.read(8, f"lanes[{i}].connecting_lane")
        node_count = _read_ranged(r, 6, 2, 63, f"lanes[{i}].node_count")
        nodes = []
        for j in range(node_count):
            dx = _read_signed16(r, f"lanes[{i}].nodes[{j}].dx")
            dy = _read_signed16(r, f"lanes[{i}].nodes[{j}].dy")
            if dx == -32768 or dy == -32768:
                raise FieldOutOfRange(f"lanes[{i}].nodes[{j}] offset raw -32768")
            nodes.append((dx * 2, dy * 2))
        lanes.append(LaneDescriptor(lane_id, sg, connecting, nodes))
    return MapMessage(intersection,
                      (_S["latitude"].to_engineering(lat),
                       _S["longitude"].to_engineering(lon),
                       int(_S["elevation"].to_engineering(elev))),
                      lane_width, lanes)


def decode_frame(payload_hex: str):
    """Decode a lowercase hex payload into a BsmCore, SpatMessage or MapMessage.

    Consumes exactly the declared bits and requires the sub-byte padding to
    be zero.
    """
    try:
        data = bytes.fromhex(payload_hex)
    except ValueError as exc:
        raise Truncated(f"not a hex payload: {exc}") from None
    r = _BitReader(data)
    msg_type = r.read(3, "msg_type")
    if msg_type == MSG_TYPE_BSM:
        msg = _decode_bsm(r)
    elif msg_type == MSG_TYPE_SPAT:
        msg = _decode_spat(r)
    elif msg_type == MSG_TYPE_MAP:
        msg = _decode_map(r)
    else:
        raise UnknownMsgType(f"msg_type {msg_type}")
    r.finish()
    return msg


def _encode_bsm(w: _BitWriter, m: BsmCore) -> None:
    w.write(m.temp_id, 32)
    w.write(SEC_MARK_UNAVAILABLE_RAW if m.sec_mark_ms is None else m.sec_mark_ms, 16)
    w.write(_S["latitude"].to_raw(m.latitude_deg) + 900000000, 31)
    w.write(_S["longitude"].to_raw(m.longitude_deg) + 1799999999, 32)
    w.write(_S["elevation"].to_raw(m.elevation_cm) + 4096, 16)
    w.write(_S["speed"].to_raw(m.speed_mps), 13)
    w.write(_S["heading"].to_raw(m.heading_deg), 15)
    w.write(_S["steering_angle"].to_raw(m.steering_angle_deg) + 126, 8)
    w.write(_S["accel_long"].to_raw(m.accel_long_mps2) + 2000, 12)
    w.write(_S["accel_lat"].to_raw(m.accel_lat_mps2) + 2000, 12)
    w.write(_S["accel_vert"].to_raw(m.accel_vert_g) + 127, 8)
    w.write(m.brake_status, 8)
    w.write(int(m.transmission), 3)
    w.write(m.width_cm, 10)
    w.write(m.length_cm, 12)
    w.write(m.accuracy_raw, 8)
    w.write(len(m.path_hist), 4)
    for dlat, dlon in m.path_hist:
        w.write(_signed16(_S["path_offset"].to_raw(dlat)), 16)
        w.write(_signed16(_S["path_offset"].to_raw(dlon)), 16)
    if m.path_pred is not None:
        w.write(1, 1)
        w.write(_signed16(_S["path_offset"].to_raw(m.path_pred[0])), 16)
        w.write(_signed16(_S["path_offset"].to_raw(m.path_pred[1])), 16)
    else:
        w.write(0, 1)


def _encode_spat(w: _BitWriter, m: SpatMessage) -> None:
    w.write(m.intersection_id, 16)
    w.write(m.moy, 20)
    w.write(m.d_second_ms, 16)
    w.write(len(m.movements), 4)
    for mv in m.movements:
        w.write(mv.signal_group_id, 8)
        w.write(int(mv.event_state), 4)
        w.write(mv.min_end_time_mark, 16)
        w.write(mv.max_end_time_mark, 16)


def _encode_map(w: _BitWriter, m: MapMessage) -> None:
    w.write(m.intersection_id, 16)
    w.write(_S["latitude"].to_raw(m.ref_point[0]) + 900000000, 31)
    w.write(_S["longitude"].to_raw(m.ref_point[1]) + 1799999999, 32)
    w.write(_S["elevation"].to_raw(m.ref_point[2]) + 4096, 16)
    w.write(m.lane_width_cm, 15)
    w.write(len(m.lanes), 6)
    for lane in m.lanes:
        w.write(lane.lane_id, 8)
        w.write(lane.signal_group_id, 8)
        w.write(lane.connecting_lane_id, 8)
        w.write(len(lane.nodes), 6)
        for dx, dy in lane.nodes:
            w.write(_signed16(dx // 2), 16)
            w.write(_signed16(dy // 2), 16)


def encode_frame(message) -> str:
    """Encode a validated message into its canonical lowercase hex payload."""
    result = validate(message)
    if not result.ok:
        raise InvalidMessage("; ".join(result.violations))
    w = _BitWriter()
    if isinstance(message, BsmCore):
        w.write(MSG_TYPE_BSM, 3)
        _encode_bsm(w, message)
    elif isinstance(message, SpatMessage):
        w.write(MSG_TYPE_SPAT, 3)
        _encode_spat(w, message)
    else:
        w.write(MSG_TYPE_MAP, 3)
        _encode_map(w, message)
    return w.to_bytes().hex()
