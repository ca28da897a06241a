"""Deterministic discrete-time corridor simulation.

Hosts fixed-time signal controllers, RSU twins broadcasting SPaT (10 Hz) and
MAP (1 Hz), replay-driven OBU twins, and synthetic virtual OBUs, all wired
through the lossy channel model. The output frame log has exactly the shape
of real ingestion: NDJSON lines {rsu_id, received_at_ms, payload_hex}.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import codec
from .lanegeo import LocalFrame
from .messages import (
    BsmCore,
    IntegratedRecord,
    MapMessage,
    MovementPhaseState,
    MovementState,
    SpatMessage,
    Transmission,
    TIME_MARK_UNDEFINED,
    validate,
)
from .netmodel import Channel, ChannelConfig
from .timesync import year_start_epoch_ms

logger = logging.getLogger(__name__)

SPAT_PERIOD_MS = 100
MAP_PERIOD_MS = 1000
BSM_PERIOD_MS = 100

ACCEL_MAX_MPS2 = 2.0
BRAKE_MPS2 = 3.0
STOP_EPS_M = 0.05


class ScenarioInvalid(ValueError):
    pass


class RouteExhausted(Exception):
    """Internal marker: the vehicle left the corridor and despawns."""


@dataclass
class Phase:
    green_signal_groups: tuple[int, ...]
    green_s: float
    yellow_s: float
    all_red_s: float


@dataclass
class PhasePlan:
    intersection_id: int
    phases: list[Phase]

    def signal_groups(self) -> list[int]:
        groups = set()
        for ph in self.phases:
            groups.update(ph.green_signal_groups)
        return sorted(groups)

    def intervals(self) -> tuple[list[tuple[int, int, int, tuple[int, ...]]], int]:
        """[(start_ms, end_ms, event_state, phase_greens)], cycle_ms."""
        out = []
        t = 0
        for ph in self.phases:
            for dur_s, ev in ((ph.green_s, 6), (ph.yellow_s, 8), (ph.all_red_s, 3)):
                dur = round(dur_s * 1000)
                if dur > 0:
                    out.append((t, t + dur, ev, ph.green_signal_groups))
                    t += dur
        return out, t


@dataclass
class GroupSignal:
    event_state: MovementPhaseState
    min_end_time_mark: int
    max_end_time_mark: int


def _next_green_start(intervals, cycle_ms, pos, group) -> Optional[int]:
    for k in (0, 1):
        for start, _end, ev, greens in intervals:
            if ev == 6 and group in greens and start + k * cycle_ms > pos:
                return start + k * cycle_ms
    return None


def controller_tick(plan: PhasePlan, sim_time_ms: int,
                    start_epoch_ms: int) -> dict[int, GroupSignal]:
    """Fixed-time signal state for every group of the plan.

    Green groups show protected movement (6), then protected clearance (8)
    through the yellow; everyone else is stop-and-remain (3) until its next
    green starts. min/max end TimeMarks coincide (fixed-time control).
    """
    intervals, cycle_ms = plan.intervals()
    pos = sim_time_ms % cycle_ms
    cur = next(iv for iv in intervals if iv[0] <= pos < iv[1])
    state = {}
    for g in plan.signal_groups():
        if g in cur[3] and cur[2] != 3:
            ev, end_pos = cur[2], cur[1]
        else:
            ev, end_pos = 3, _next_green_start(intervals, cycle_ms, pos, g)
        if end_pos is None:
            tm = TIME_MARK_UNDEFINED
        else:
            end_abs = start_epoch_ms + sim_time_ms + (end_pos - pos)
            tm = (end_abs % 3_600_000) // 100
        state[g] = GroupSignal(MovementPhaseState(ev), tm, tm)
    return state


class FixedTimeController:
    """Plan executor; supports a flag-gated one-shot green extension."""

    def __init__(self, plan: PhasePlan, start_epoch_ms: int,
                 allow_extension: bool = False):
        self.plan = plan
        self.start_epoch_ms = start_epoch_ms
        self.allow_extension = allow_extension
        self.shift_ms = 0
        self.pending: Optional[tuple[int, int]] = None  # (group, extension_ms)
        self.extensions_applied = 0

    def request_extension(self, signal_group: int, extension_s: float) -> bool:
        if not self.allow_extension or self.pending is not None:
            return False
        self.pending = (signal_group, round(extension_s * 1000))
        return True

    def _consume_extension(self, sim_time_ms: int, tick_ms: int) -> None:
        group, ext_ms = self.pending
        intervals, cycle_ms = self.plan.intervals()
        pos = (sim_time_ms - self.shift_ms) % cycle_ms
        cur = next(iv for iv in intervals if iv[0] <= pos < iv[1])
        if cur[2] != 6 or group not in cur[3]:
            return
        if cur[1] - pos > tick_ms:  # extend only as the green is about to end
            return
        elapsed = pos - cur[0]
        self.shift_ms += min(ext_ms, elapsed)  # shifting past the green start would
        self.pending = None                    # replay the previous phase
        self.extensions_applied += 1

    def state_at(self, sim_time_ms: int, tick_ms: int = 100) -> dict[int, GroupSignal]:
        if self.pending is not None:
            self._consume_extension(sim_time_ms, tick_ms)
        return controller_tick(self.plan, sim_time_ms - self.shift_ms,
                               self.start_epoch_ms + self.shift_ms)


@dataclass
class RouteLeg:
    intersection_id: int
    lane_id: int
    toward_stop_line: bool = True


@dataclass
class VehicleSpec:
    kind: str  # "virtual" | "twin"
    temp_id: int
    route: list[RouteLeg] = field(default_factory=list)
    entry_time_s: float = 0.0
    target_speed_mps: float = 10.0
    replay: list[IntegratedRecord] = field(default_factory=list)


@dataclass
class VehicleState:
    temp_id: int
    kind: str
    latitude_deg: float = 0.0
    longitude_deg: float = 0.0
    elevation_cm: int = 0
    speed_mps: float = 0.0
    heading_deg: float = 0.0
    accel_mps2: float = 0.0
    active: bool = False


@dataclass
class Scenario:
    maps: list[MapMessage]
    plans: list[PhasePlan]
    vehicles: list[VehicleSpec]
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    tick_ms: int = 100
    duration_s: float = 60.0
    seed: int = 0
    start_year: int = 2023
    start_moy: int = 0
    start_ms: int = 0
    allow_green_extension: bool = False

    @property
    def start_epoch_ms(self) -> int:
        return (year_start_epoch_ms(self.start_year)
                + self.start_moy * 60_000 + self.start_ms)

    def to_json_dict(self) -> dict:
        return {
            "start_time": {"year": self.start_year, "moy": self.start_moy,
                           "ms": self.start_ms},
            "tick_ms": self.tick_ms,
            "duration_s": self.duration_s,
            "seed": self.seed,
            "allow_green_extension": self.allow_green_extension,
            "channel": self.channel.to_json_dict(),
            "maps": [m.to_json_dict() for m in self.maps],
            "plans": [{
                "intersection_id": p.intersection_id,
                "phases": [{
                    "green_signal_groups": list(ph.green_signal_groups),
                    "green_s": ph.green_s,
                    "yellow_s": ph.yellow_s,
                    "all_red_s": ph.all_red_s,
                } for ph in p.phases],
            } for p in self.plans],
            "vehicles": [{
                "kind": v.kind,
                "temp_id": v.temp_id,
                "route": [{"intersection_id": l.intersection_id,
                           "lane_id": l.lane_id,
                           "toward_stop_line": l.toward_stop_line}
                          for l in v.route],
                "entry_time_s": v.entry_time_s,
                "target_speed_mps": v.target_speed_mps,
                "replay": [r.to_json_dict() for r in v.replay],
            } for v in self.vehicles],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Scenario":
        st = d.get("start_time", {})
        return cls(
            maps=[MapMessage.from_json_dict(m) for m in d.get("maps", [])],
            plans=[PhasePlan(
                intersection_id=p["intersection_id"],
                phases=[Phase(tuple(ph["green_signal_groups"]), ph["green_s"],
                              ph["yellow_s"], ph["all_red_s"])
                        for ph in p["phases"]],
            ) for p in d.get("plans", [])],
            vehicles=[VehicleSpec(
                kind=v["kind"],
                temp_id=v["temp_id"],
                route=[RouteLeg(l["intersection_id"], l["lane_id"],
                                l.get("toward_stop_line", True))
                       for l in v.get("route", [])],
                entry_time_s=v.get("entry_time_s", 0.0),
                target_speed_mps=v.get("target_speed_mps", 10.0),
                replay=[IntegratedRecord.from_json_dict(r)
                        for r in v.get("replay", [])],
            ) for v in d.get("vehicles", [])],
            channel=ChannelConfig.from_json_dict(d.get("channel", {})),
            tick_ms=d.get("tick_ms", 100),
            duration_s=d.get("duration_s", 60.0),
            seed=d.get("seed", 0),
            start_year=st.get("year", 2023),
            start_moy=st.get("moy", 0),
            start_ms=st.get("ms", 0),
            allow_green_extension=d.get("allow_green_extension", False),
        )


def validate_scenario(scenario: Scenario) -> list[str]:
    problems = []
    if scenario.tick_ms <= 0 or 1000 % scenario.tick_ms != 0:
        problems.append(f"tick_ms {scenario.tick_ms} does not divide 1000")
    if scenario.duration_s <= 0:
        problems.append("duration_s must be positive")
    try:
        scenario.channel.check()
    except ValueError as exc:
        problems.append(f"channel: {exc}")
    map_ids = set()
    for i, m in enumerate(scenario.maps):
        result = validate(m)
        if not result.ok:
            problems.append(f"maps[{i}]: {'; '.join(result.violations)}")
        map_ids.add(m.intersection_id)
    lanes = {(m.intersection_id, l.lane_id) for m in scenario.maps for l in m.lanes}
    for p in scenario.plans:
        if p.intersection_id not in map_ids:
            problems.append(f"plan for unknown intersection {p.intersection_id}")
        if not p.phases:
            problems.append(f"plan {p.intersection_id} has no phases")
        for ph in p.phases:
            if ph.green_s <= 0:
                problems.append(f"plan {p.intersection_id}: non-positive green")
    for v in scenario.vehicles:
        if v.kind not in ("virtual", "twin"):
            problems.append(f"vehicle {v.temp_id}: unknown kind {v.kind!r}")
        if v.kind == "virtual":
            if not v.route:
                problems.append(f"vehicle {v.temp_id}: virtual without route")
            for leg in v.route:
                if (leg.intersection_id, leg.lane_id) not in lanes:
                    problems.append(f"vehicle {v.temp_id}: route lane "
                                    f"({leg.intersection_id}, {leg.lane_id}) "
                                    "not in any MAP")
        if v.kind == "twin" and not v.replay:
            problems.append(f"vehicle {v.temp_id}: twin without replay records")
    return problems


@dataclass
class FrameLogEntry:
    rsu_id: str
    received_at_ms: int
    payload_hex: str

    def to_json_dict(self) -> dict:
        return {"rsu_id": self.rsu_id, "received_at_ms": self.received_at_ms,
                "payload_hex": self.payload_hex}

    @classmethod
    def from_json_dict(cls, d: dict) -> "FrameLogEntry":
        return cls(d["rsu_id"], d["received_at_ms"], d["payload_hex"])


class _Rsu:
    def __init__(self, map_msg: MapMessage, controller: FixedTimeController,
                 xy: tuple[float, float]):
        self.rsu_id = f"rsu-{map_msg.intersection_id}"
        self.intersection_id = map_msg.intersection_id
        self.map_msg = map_msg
        self.map_hex = codec.encode_frame(map_msg)
        self.controller = controller
        self.xy = xy

    def spat_at(self, abs_ms: int, sim_time_ms: int, tick_ms: int,
                year_start_ms: int) -> SpatMessage:
        state = self.controller.state_at(sim_time_ms, tick_ms)
        movements = [MovementState(g, gs.event_state, gs.min_end_time_mark,
                                   gs.max_end_time_mark)
                     for g, gs in sorted(state.items())]
        moy = (abs_ms - year_start_ms) // 60_000
        return SpatMessage(self.intersection_id, moy, abs_ms % 60_000, movements)


class _RouteGeometry:
    """A vehicle's route as one global-frame polyline with stop checkpoints."""

    def __init__(self, spec: VehicleSpec, maps_by_id: dict[int, MapMessage],
                 global_frame: LocalFrame):
        points: list[tuple[float, float]] = []
        self.stops: list[tuple[float, int, int]] = []  # (arc_s, intersection, group)
        for leg in spec.route:
            m = maps_by_id[leg.intersection_id]
            lane = next(l for l in m.lanes if l.lane_id == leg.lane_id)
            frame = LocalFrame(m.ref_point[0], m.ref_point[1])
            nodes = [(dx / 100.0, dy / 100.0) for dx, dy in lane.nodes]
            if leg.toward_stop_line:
                nodes = list(reversed(nodes))
            for x, y in nodes:
                lat, lon = frame.to_latlon(x, y)
                gx, gy = global_frame.to_xy(lat, lon)
                if not points or (abs(points[-1][0] - gx) > 1e-9
                                  or abs(points[-1][1] - gy) > 1e-9):
                    points.append((gx, gy))
            if leg.toward_stop_line and lane.signal_group_id > 0:
                self.stops.append((self._length(points), leg.intersection_id,
                                   lane.signal_group_id))
        if len(points) < 2:
            raise ScenarioInvalid(f"vehicle {spec.temp_id}: degenerate route")
        self.points = points
        self.cum = [0.0]
        for a, b in zip(points, points[1:]):
            self.cum.append(self.cum[-1] + math.hypot(b[0] - a[0], b[1] - a[1]))
        self.total = self.cum[-1]

    @staticmethod
    def _length(points) -> float:
        return sum(math.hypot(b[0] - a[0], b[1] - a[1])
                   for a, b in zip(points, points[1:]))

    def at(self, s: float) -> tuple[float, float, float]:
        """(x, y, heading_deg) at arc length s."""
        s = max(0.0, min(s, self.total))
        for i in range(len(self.cum) - 1):
            if s <= self.cum[i + 1] or i == len(self.cum) - 2:
                a, b = self.points[i], self.points[i + 1]
                seg = self.cum[i + 1] - self.cum[i]
                t = (s - self.cum[i]) / seg if seg > 0 else 0.0
                x = a[0] + t * (b[0] - a[0])
                y = a[1] + t * (b[1] - a[1])
                heading = math.degrees(math.atan2(b[0] - a[0], b[1] - a[1])) % 360.0
                return x, y, heading
        raise AssertionError("unreachable")

    def next_stop(self, s: float):
        for stop_s, iid, group in self.stops:
            if stop_s - s >= -1e-6:
                return stop_s, iid, group
        return None


class _Vehicle:
    def __init__(self, spec: VehicleSpec, geometry: Optional[_RouteGeometry]):
        self.spec = spec
        self.geometry = geometry
        self.state = VehicleState(spec.temp_id, spec.kind)
        self.arc_s = 0.0
        self.visible_signals: dict[tuple[int, int], MovementPhaseState] = {}
        self.replay_pos = 0
        self.last_applied_ts: Optional[int] = None
        self.stale_records = 0
        self.despawned_at_ms: Optional[int] = None
        self.stops_made = 0
        self._was_moving = False

    def receive(self, message) -> None:
        if isinstance(message, SpatMessage):
            for mv in message.movements:
                self.visible_signals[(message.intersection_id,
                                      mv.signal_group_id)] = mv.event_state


def obu_twin_apply(vehicle: _Vehicle, record) -> bool:
    """Mirror a replayed record into the twin; stale records are ignored."""
    if isinstance(record, IntegratedRecord):
        ts = record.timestamp_epoch_ms
        lat, lon, elev = record.position
        speed, heading = record.speed_mps, record.heading_deg
    elif isinstance(record, BsmCore):
        ts = record.sec_mark_ms or 0
        lat, lon, elev = record.latitude_deg, record.longitude_deg, record.elevation_cm
        speed, heading = record.speed_mps, record.heading_deg
    else:
        raise TypeError(f"cannot replay {type(record).__name__}")
    if vehicle.last_applied_ts is not None and ts < vehicle.last_applied_ts:
        vehicle.stale_records += 1
        return False
    st = vehicle.state
    st.latitude_deg, st.longitude_deg, st.elevation_cm = lat, lon, elev
    st.speed_mps = speed if speed is not None else 0.0
    st.heading_deg = heading if heading is not None else 0.0
    st.active = True
    vehicle.last_applied_ts = ts
    return True


def virtual_obu_step(vehicle: _Vehicle, dt_s: float) -> None:
    """One longitudinal-model step: chase the target speed, brake for a
    non-permissive signal once the stopping distance reaches the stop line."""
    geom = vehicle.geometry
    st = vehicle.state
    v = st.speed_mps
    target = vehicle.spec.target_speed_mps
    stop = geom.next_stop(vehicle.arc_s)
    must_stop = False
    d_stop = math.inf
    if stop is not None:
        stop_s, iid, group = stop
        ev = vehicle.visible_signals.get((iid, group))
        if ev in (MovementPhaseState.STOP_AND_REMAIN,
                  MovementPhaseState.PROTECTED_CLEARANCE):
            d_stop = stop_s - vehicle.arc_s
            # one-tick lookahead so braking starts before the point of no return
            must_stop = v * v / (2 * BRAKE_MPS2) >= d_stop - v * dt_s

    if must_stop:
        if d_stop <= STOP_EPS_M or v <= 0.0:
            v_new = 0.0
        else:
            a = -min(BRAKE_MPS2, v * v / (2 * d_stop))
            v_new = max(0.0, v + a * dt_s)
    else:
        a = max(-BRAKE_MPS2, min(ACCEL_MAX_MPS2, (target - v) / dt_s))
        v_new = max(0.0, min(target, v + a * dt_s))

    ds = (v + v_new) / 2.0 * dt_s
    if must_stop and ds >= d_stop:
        ds = max(d_stop, 0.0)
        v_new = 0.0
    vehicle.arc_s += ds
    st.accel_mps2 = (v_new - v) / dt_s
    st.speed_mps = v_new
    if v_new < 0.05 and vehicle._was_moving:
        vehicle.stops_made += 1
        vehicle._was_moving = False
    elif v_new > 0.5:
        vehicle._was_moving = True
    if vehicle.arc_s >= geom.total - 1e-9:
        raise RouteExhausted


@dataclass
class SimulationResult:
    frames: list[FrameLogEntry]
    summary: dict

    def write_frame_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.frames:
                fh.write(json.dumps(entry.to_json_dict(), separators=(",", ":")))
                fh.write("\n")


class Simulation:
    def __init__(self, scenario: Scenario,
                 extension_hook: Optional[Callable] = None):
        problems = validate_scenario(scenario)
        if problems:
            raise ScenarioInvalid("; ".join(problems))
        self.scenario = scenario
        self.extension_hook = extension_hook
        self.start_epoch_ms = scenario.start_epoch_ms
        self.year_start_ms = year_start_epoch_ms(scenario.start_year)
        self.channel = Channel(scenario.channel)
        origin = scenario.maps[0].ref_point if scenario.maps else (0.0, 0.0, 0)
        self.global_frame = LocalFrame(origin[0], origin[1])
        maps_by_id = {m.intersection_id: m for m in scenario.maps}
        plans_by_id = {p.intersection_id: p for p in scenario.plans}
        self.controllers = {
            iid: FixedTimeController(plan, self.start_epoch_ms,
                                     scenario.allow_green_extension)
            for iid, plan in plans_by_id.items()}
        self.rsus = []
        for m in sorted(scenario.maps, key=lambda m: m.intersection_id):
            if m.intersection_id not in self.controllers:
                continue
            xy = self.global_frame.to_xy(m.ref_point[0], m.ref_point[1])
            self.rsus.append(_Rsu(m, self.controllers[m.intersection_id], xy))
        self.vehicles = []
        for spec in sorted(scenario.vehicles, key=lambda v: v.temp_id):
            geom = (_RouteGeometry(spec, maps_by_id, self.global_frame)
                    if spec.kind == "virtual" else None)
            self.vehicles.append(_Vehicle(spec, geom))
        self._events: list = []  # (arrival_ms, seq, vehicle_idx, message)
        self._event_seq = 0
        self.frames: list[FrameLogEntry] = []
        self.counters = {"spat_frames": 0, "map_frames": 0, "bsm_frames": 0,
                         "despawned": 0}

    def request_extension(self, intersection_id: int, signal_group: int,
                          extension_s: float = 5.0) -> bool:
        controller = self.controllers.get(intersection_id)
        return controller.request_extension(signal_group, extension_s) \
            if controller else False

    def _vehicle_xy(self, vehicle: _Vehicle) -> tuple[float, float]:
        return self.global_frame.to_xy(vehicle.state.latitude_deg,
                                       vehicle.state.longitude_deg)

    def _broadcast_to_vehicles(self, payload: str, rsu: _Rsu, abs_ms: int,
                               message) -> None:
        for idx, vehicle in enumerate(self.vehicles):
            if not vehicle.state.active:
                continue
            result = self.channel.transmit(payload, rsu.xy,
                                           self._vehicle_xy(vehicle), abs_ms)
            if result is not None:
                heapq.heappush(self._events,
                               (result[1], self._event_seq, idx, message))
                self._event_seq += 1

    def _bsm_to_rsus(self, vehicle: _Vehicle, abs_ms: int) -> None:
        st = vehicle.state
        bsm = BsmCore(
            temp_id=st.temp_id,
            sec_mark_ms=abs_ms % 60_000,
            latitude_deg=st.latitude_deg,
            longitude_deg=st.longitude_deg,
            elevation_cm=st.elevation_cm,
            speed_mps=min(max(st.speed_mps, 0.0), 163.8),
            heading_deg=st.heading_deg % 360.0,
            accel_long_mps2=max(-20.0, min(20.0, st.accel_mps2)),
            brake_status=1 if st.accel_mps2 < -0.5 else 0,
            transmission=Transmission.FORWARD,
            width_cm=200,
            length_cm=480,
        )
        payload = codec.encode_frame(bsm)
        xy = self._vehicle_xy(vehicle)
        for rsu in self.rsus:
            result = self.channel.transmit(payload, xy, rsu.xy, abs_ms)
            if result is not None:
                self.frames.append(FrameLogEntry(rsu.rsu_id, round(result[1]),
                                                 payload))
                self.counters["bsm_frames"] += 1

    def run(self) -> SimulationResult:
        sc = self.scenario
        duration_ms = round(sc.duration_s * 1000)
        for t in range(0, duration_ms, sc.tick_ms):
            abs_ms = self.start_epoch_ms + t
            self.channel.advance_tick()

            # deliveries that have arrived by this tick
            while self._events and self._events[0][0] <= abs_ms:
                _, _, idx, message = heapq.heappop(self._events)
                self.vehicles[idx].receive(message)

            # RSU twins: SPaT at 10 Hz, MAP at 1 Hz, lossless pipeline tap
            for rsu in self.rsus:
                if t % SPAT_PERIOD_MS == 0:
                    spat = rsu.spat_at(abs_ms, t, sc.tick_ms, self.year_start_ms)
                    payload = codec.encode_frame(spat)
                    self.frames.append(FrameLogEntry(rsu.rsu_id, abs_ms, payload))
                    self.counters["spat_frames"] += 1
                    self._broadcast_to_vehicles(payload, rsu, abs_ms, spat)
                if t % MAP_PERIOD_MS == 0:
                    self.frames.append(FrameLogEntry(rsu.rsu_id, abs_ms,
                                                     rsu.map_hex))
                    self.counters["map_frames"] += 1
                    self._broadcast_to_vehicles(rsu.map_hex, rsu, abs_ms,
                                                rsu.map_msg)

            # vehicles: spawn, replay/move, broadcast BSMs
            for vehicle in self.vehicles:
                spec = vehicle.spec
                if vehicle.despawned_at_ms is not None:
                    continue
                if spec.kind == "twin":
                    replay = spec.replay
                    applied = False
                    while (vehicle.replay_pos < len(replay)
                           and replay[vehicle.replay_pos].timestamp_epoch_ms
                           <= abs_ms):
                        applied = obu_twin_apply(vehicle,
                                                 replay[vehicle.replay_pos]) or applied
                        vehicle.replay_pos += 1
                    if (vehicle.replay_pos >= len(replay)
                            and vehicle.last_applied_ts is not None
                            and abs_ms - vehicle.last_applied_ts > 1000):
                        vehicle.state.active = False
                        vehicle.despawned_at_ms = abs_ms
                        self.counters["despawned"] += 1
                else:
                    if not vehicle.state.active:
                        if t >= round(spec.entry_time_s * 1000):
                            vehicle.state.active = True
                            x, y, heading = vehicle.geometry.at(0.0)
                            lat, lon = self.global_frame.to_latlon(x, y)
                            vehicle.state.latitude_deg = lat
                            vehicle.state.longitude_deg = lon
                            vehicle.state.heading_deg = heading
                            vehicle.state.speed_mps = spec.target_speed_mps
                            vehicle._was_moving = True
                        else:
                            continue
                    else:
                        try:
                            virtual_obu_step(vehicle, sc.tick_ms / 1000.0)
                        except RouteExhausted:
                            vehicle.state.active = False
                            vehicle.despawned_at_ms = abs_ms
                            self.counters["despawned"] += 1
                            continue
                    x, y, heading = vehicle.geometry.at(vehicle.arc_s)
                    lat, lon = self.global_frame.to_latlon(x, y)
                    vehicle.state.latitude_deg = lat
                    vehicle.state.longitude_deg = lon
                    vehicle.state.heading_deg = heading
                if vehicle.state.active and t % BSM_PERIOD_MS == 0:
                    self._bsm_to_rsus(vehicle, abs_ms)

            if self.extension_hook is not None:
                self.extension_hook(self, t)

        self.frames.sort(key=lambda e: e.received_at_ms)
        summary = {
            "duration_ms": duration_ms,
            "tick_ms": sc.tick_ms,
            "seed": sc.seed,
            "frames": dict(self.counters),
            "channel": self.channel.counters(),
            "extensions_applied": sum(c.extensions_applied
                                      for c in self.controllers.values()),
            "vehicles": {
                str(v.spec.temp_id): {
                    "kind": v.spec.kind,
                    "stops_made": v.stops_made,
                    "stale_records": v.stale_records,
                    "despawned_at_ms": v.despawned_at_ms,
                    "final_speed_mps": round(v.state.speed_mps, 3),
                } for v in self.vehicles
            },
        }
        return SimulationResult(self.frames, summary)


def simulate(scenario: Scenario,
             extension_hook: Optional[Callable] = None) -> SimulationResult:
    """Run a scenario to completion; identical scenario + seed means an
    identical frame log, byte for byte."""
    return Simulation(scenario, extension_hook).run()
