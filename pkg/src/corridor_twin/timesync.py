"""Temporal synchronization of SPaT and BSM messages.

SPaT carries (moy, d_second): minutes elapsed in the year plus milliseconds
within the current minute. Its absolute timestamp is year start + both parts.
Phase-end TimeMarks are tenths of a second within the current hour, so the
residual is computed with both operands reduced to ms-within-hour, with a
half-hour rollover heuristic for TimeMarks that refer to the next hour.
BSMs carry only a sec_mark; they borrow the minute from the most recent SPaT.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional

from .messages import SpatMessage, MovementPhaseState, TIME_MARK_UNDEFINED

MS_PER_MINUTE = 60_000
MS_PER_HOUR = 3_600_000
HALF_HOUR_MS = 1_800_000
HALF_MINUTE_MS = 30_000


class MoyOutOfRange(ValueError):
    pass


class UndefinedTimeMark(ValueError):
    """TimeMark 36001 carries no phase-end estimate."""


class NoSpatContext(RuntimeError):
    """A BSM cannot be absolutely timestamped before any SPaT arrives."""


def minutes_in_year(year: int) -> int:
    leap = year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)
    return 527040 if leap else 525600


def year_start_epoch_ms(year: int) -> int:
    return int(datetime(year, 1, 1, tzinfo=timezone.utc).timestamp()) * 1000


def spat_timestamp(moy: int, d_second_ms: int, year: int) -> int:
    """UTC epoch ms of year start + moy minutes + d_second milliseconds."""
    if not 0 <= moy <= minutes_in_year(year):
        raise MoyOutOfRange(f"moy {moy} outside [0, {minutes_in_year(year)}] for {year}")
    if not 0 <= d_second_ms <= 60999:
        raise MoyOutOfRange(f"d_second {d_second_ms} outside [0, 60999]")
    return year_start_epoch_ms(year) + moy * MS_PER_MINUTE + d_second_ms


def phase_residual(time_mark_tenths: int, moy: int, d_second_ms: int,
                   year: int) -> tuple[int, int]:
    """Remaining ms until the phase change and the epoch ms it resolves to.

    Both the TimeMark and the message time are reduced to ms within the
    current hour. A residual below -30 min means the TimeMark refers to the
    next hour; smaller negatives (phase just changed) clamp to zero.
    """
    if time_mark_tenths == TIME_MARK_UNDEFINED:
        raise UndefinedTimeMark("TimeMark 36001")
    if not 0 <= time_mark_tenths <= 36000:
        raise UndefinedTimeMark(f"TimeMark {time_mark_tenths} outside [0, 36001]")
    now_in_hour_ms = (moy % 60) * MS_PER_MINUTE + d_second_ms
    end_in_hour_ms = time_mark_tenths * 100
    residual = end_in_hour_ms - now_in_hour_ms
    if residual < -HALF_HOUR_MS:
        residual += MS_PER_HOUR
    elif residual < 0:
        residual = 0
    return residual, spat_timestamp(moy, d_second_ms, year) + residual


@dataclass
class SyncContext:
    """Most recent SPaT time fields for one RSU, used to anchor BSM minutes."""

    year: int
    latest_spat_moy: Optional[int] = None
    latest_spat_d_second_ms: Optional[int] = None
    latest_spat_received_at_ms: Optional[int] = None

    def observe_spat(self, spat: SpatMessage, received_at_ms: int) -> None:
        self.latest_spat_moy = spat.moy
        self.latest_spat_d_second_ms = spat.d_second_ms
        self.latest_spat_received_at_ms = received_at_ms

    @property
    def has_spat(self) -> bool:
        return self.latest_spat_moy is not None


def bsm_timestamp(sec_mark_ms: int, ctx: SyncContext) -> int:
    """Epoch ms of a BSM: the latest SPaT's minute plus the BSM's sec_mark.

    When the sec_mark sits more than half a minute before the SPaT's own
    d_second the BSM belongs to the next minute.
    """
    if not ctx.has_spat:
        raise NoSpatContext("no SPaT observed yet")
    if not 0 <= sec_mark_ms <= 59999:
        raise ValueError(f"sec_mark {sec_mark_ms} outside [0, 59999]")
    minute = ctx.latest_spat_moy
    if sec_mark_ms < ctx.latest_spat_d_second_ms - HALF_MINUTE_MS:
        minute += 1
    return year_start_epoch_ms(ctx.year) + minute * MS_PER_MINUTE + sec_mark_ms


@dataclass
class SyncedSignalState:
    """One signal group's phase state with absolute timing resolved."""

    signal_group_id: int
    event_state: MovementPhaseState
    timestamp_epoch_ms: int
    residual_phase_ms: Optional[int]
    phase_change_epoch_ms: Optional[int]


def sync_signal_states(spat: SpatMessage, year: int) -> list[SyncedSignalState]:
    """Resolve every movement of a SPaT into absolute epoch timing."""
    ts = spat_timestamp(spat.moy, spat.d_second_ms, year)
    states = []
    for mv in spat.movements:
        if mv.min_end_time_mark == TIME_MARK_UNDEFINED:
            residual, change = None, None
        else:
            residual, change = phase_residual(
                mv.min_end_time_mark, spat.moy, spat.d_second_ms, year)
        states.append(SyncedSignalState(mv.signal_group_id, mv.event_state,
                                        ts, residual, change))
    return states


def iso_utc(epoch_ms: int) -> str:
    """Human-facing ISO-8601 rendering with millisecond precision."""
    dt = datetime.fromtimestamp(epoch_ms // 1000, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{epoch_ms % 1000:03d}Z"
