"""Fusing decoded BSM/SPaT/MAP streams into IntegratedRecords.

SPaT and MAP messages update per-RSU / per-intersection caches; each BSM is
then timestamped from the latest SPaT minute, lane-matched against the cached
MAPs, and joined with the cached movement state of its signal group. Copies
of the same broadcast collected by overlapping RSUs are reconciled downstream
by field-level majority voting.
"""

from __future__ import annotations

import dataclasses
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from .lanegeo import LaneIndex, distance_to_stop_line
from .messages import (
    BsmCore,
    IntegratedRecord,
    MapMessage,
    SpatMessage,
)
from .timesync import SyncContext, bsm_timestamp, phase_residual
from .messages import TIME_MARK_UNDEFINED

logger = logging.getLogger(__name__)

DEDUP_WINDOW_MS = 100  # one broadcast period


@dataclass
class StreamCaches:
    """Single-writer caches for one edge worker."""

    year: int
    use_hull: bool = True
    contexts: dict[str, SyncContext] = field(default_factory=dict)
    spat_by_intersection: dict[int, SpatMessage] = field(default_factory=dict)
    map_by_intersection: dict[int, MapMessage] = field(default_factory=dict)
    last_record_by_vehicle: dict[int, IntegratedRecord] = field(default_factory=dict)
    lane_index: LaneIndex = field(default_factory=LaneIndex)
    bsm_before_spat: int = 0
    bsm_without_sec_mark: int = 0

    def __post_init__(self):
        self.lane_index.use_hull = self.use_hull

    def context_for(self, rsu_id: str) -> SyncContext:
        if rsu_id not in self.contexts:
            self.contexts[rsu_id] = SyncContext(year=self.year)
        return self.contexts[rsu_id]


def ingest(message, rsu_id: str, received_at_ms: int,
           caches: StreamCaches) -> Optional[IntegratedRecord]:
    """Feed one decoded message; BSMs yield an IntegratedRecord.

    BSMs arriving before any SPaT (or without a sec_mark) are not dropped:
    they fall back to the receipt time and a warning counter.
    """
    if isinstance(message, SpatMessage):
        caches.context_for(rsu_id).observe_spat(message, received_at_ms)
        caches.spat_by_intersection[message.intersection_id] = message
        return None
    if isinstance(message, MapMessage):
        cached = caches.map_by_intersection.get(message.intersection_id)
        if cached != message:  # rebuild polygons only on content change
            caches.map_by_intersection[message.intersection_id] = message
            caches.lane_index.add_map(message)
        return None
    if not isinstance(message, BsmCore):
        raise TypeError(f"not a V2X message: {type(message).__name__}")

    ctx = caches.context_for(rsu_id)
    if message.sec_mark_ms is None:
        caches.bsm_without_sec_mark += 1
        timestamp = received_at_ms
    elif not ctx.has_spat:
        caches.bsm_before_spat += 1
        timestamp = received_at_ms
    else:
        timestamp = bsm_timestamp(message.sec_mark_ms, ctx)

    record = IntegratedRecord(
        timestamp_epoch_ms=timestamp,
        temp_id=message.temp_id,
        position=(message.latitude_deg, message.longitude_deg, message.elevation_cm),
        speed_mps=message.speed_mps,
        heading_deg=message.heading_deg,
        source_rsu_ids=[rsu_id],
    )

    match = caches.lane_index.match(message.latitude_deg, message.longitude_deg)
    if match is not None:
        iid, lane_id, signal_group = match
        record.matched_intersection_id = iid
        record.matched_lane_id = lane_id
        lane = caches.lane_index.lane(iid, lane_id)
        point = caches.lane_index.position_xy(iid, message.latitude_deg,
                                              message.longitude_deg)
        record.distance_to_stop_line_m = distance_to_stop_line(point, lane)
        spat = caches.spat_by_intersection.get(iid)
        movement = spat.movement_for(signal_group) if spat else None
        if movement is not None and signal_group > 0:
            record.signal_group_id = signal_group
            record.event_state = movement.event_state
            if movement.min_end_time_mark != TIME_MARK_UNDEFINED:
                residual, _ = phase_residual(movement.min_end_time_mark,
                                             spat.moy, spat.d_second_ms,
                                             caches.year)
                record.residual_phase_ms = residual

    caches.last_record_by_vehicle[message.temp_id] = record
    return record


def dedup_key(message) -> tuple:
    """Message-intrinsic identity + sub-second time, shared by all copies
    of one broadcast (payload hashes would split corrupted copies)."""
    if isinstance(message, BsmCore):
        return ("bsm", message.temp_id, message.sec_mark_ms)
    if isinstance(message, SpatMessage):
        return ("spat", message.intersection_id, message.d_second_ms)
    if isinstance(message, MapMessage):
        return ("map", message.intersection_id, None)
    if isinstance(message, IntegratedRecord):
        return ("record", message.temp_id, message.timestamp_epoch_ms)
    raise TypeError(f"no dedup key for {type(message).__name__}")


@dataclass
class Copy:
    rsu_id: str
    received_at_ms: int
    message: object


@dataclass
class IntegrityIssue:
    key: tuple
    field_name: str
    dissenting_rsus: list[str]

    def to_json_dict(self) -> dict:
        return {"key": list(self.key), "field": self.field_name,
                "dissenting_rsus": self.dissenting_rsus}


class EmptyCopySet(ValueError):
    pass


def _freeze(value):
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, dict):
        return tuple(sorted((k, _freeze(v)) for k, v in value.items()))
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return (type(value).__name__,) + tuple(
            _freeze(getattr(value, f.name)) for f in dataclasses.fields(value))
    return value


def vote(copies: list[Copy]) -> tuple[object, list[IntegrityIssue]]:
    """Field-level majority across copies of one broadcast.

    None loses to any present majority (a copy fused without MAP context
    should not erase another worker's lane match); remaining ties go to the
    copy received earliest. source_rsu_ids on records are unioned, not voted.
    """
    if not copies:
        raise EmptyCopySet("no copies to vote over")
    ordered = sorted(copies, key=lambda c: (c.received_at_ms, c.rsu_id))
    first = ordered[0].message
    if len(ordered) == 1:
        return first, []
    key = dedup_key(first)
    issues: list[IntegrityIssue] = []
    winners = {}
    for f in dataclasses.fields(first):
        if f.name == "source_rsu_ids":
            continue
        values = [(c, _freeze(getattr(c.message, f.name))) for c in ordered]
        present = [(c, v) for c, v in values if v is not None]
        pool = present if present else values
        counts = Counter(v for _, v in pool)
        best_count = max(counts.values())
        # earliest receipt among the tied values decides
        winner = next(v for c, v in pool if counts[v] == best_count)
        winners[f.name] = next(getattr(c.message, f.name)
                               for c, v in pool if v == winner)
        dissent = sorted({c.rsu_id for c, v in values if v != winner})
        if dissent:
            issues.append(IntegrityIssue(key, f.name, dissent))
    canonical = dataclasses.replace(first, **winners)
    if isinstance(canonical, IntegratedRecord):
        merged = []
        for c in ordered:
            for rsu in c.message.source_rsu_ids:
                if rsu not in merged:
                    merged.append(rsu)
        canonical.source_rsu_ids = merged
    return canonical, issues


def dedup_window(stream: Iterable[tuple[str, int, object]],
                 window_ms: int = DEDUP_WINDOW_MS) -> Iterator[list[Copy]]:
    """Group same-key copies arriving within window_ms of the first copy.

    The stream must be ordered by received_at_ms; each group is emitted
    exactly once, when its window closes.
    """
    if window_ms <= 0:
        raise ValueError("window_ms must be positive")
    open_groups: dict[tuple, list[Copy]] = {}
    for rsu_id, received_at_ms, message in stream:
        # flush groups whose window closed before this arrival
        for key in [k for k, g in open_groups.items()
                    if g[0].received_at_ms + window_ms <= received_at_ms]:
            yield open_groups.pop(key)
        key = dedup_key(message)
        copy = Copy(rsu_id, received_at_ms, message)
        if key in open_groups:
            open_groups[key].append(copy)
        else:
            open_groups[key] = [copy]
    for key in sorted(open_groups, key=lambda k: open_groups[k][0].received_at_ms):
        yield open_groups[key]
