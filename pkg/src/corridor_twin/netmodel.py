"""Stochastic channel model for simulated V2X transmissions.

Every transmission faces a distance-based delivery probability (1 inside
r0, linear falloff to 0 at rmax) and an independent packet error rate; on
delivery the arrival time is the send time plus base latency with uniform
jitter. One seeded RNG stream per channel keeps whole simulations replayable.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional


class InvalidConfig(ValueError):
    pass


@dataclass(frozen=True)
class ChannelConfig:
    base_latency_ms: float = 20.0
    jitter_ms: float = 10.0
    per: float = 0.02
    r0_m: float = 300.0
    rmax_m: float = 600.0
    seed: int = 0

    def check(self) -> None:
        if not 0.0 <= self.per <= 1.0:
            raise InvalidConfig(f"per {self.per} outside [0, 1]")
        if not 0.0 < self.r0_m <= self.rmax_m:
            raise InvalidConfig("need 0 < r0_m <= rmax_m")
        if self.jitter_ms < 0 or self.jitter_ms > self.base_latency_ms:
            raise InvalidConfig("need 0 <= jitter_ms <= base_latency_ms")

    def to_json_dict(self) -> dict:
        return {
            "base_latency_ms": self.base_latency_ms,
            "jitter_ms": self.jitter_ms,
            "per": self.per,
            "r0_m": self.r0_m,
            "rmax_m": self.rmax_m,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ChannelConfig":
        return cls(**{k: d[k] for k in
                      ("base_latency_ms", "jitter_ms", "per", "r0_m", "rmax_m", "seed")
                      if k in d})


class Channel:
    """Seeded lossy channel; single-owner, invoked sequentially per tick."""

    def __init__(self, config: ChannelConfig):
        config.check()
        self.config = config
        self._rng = random.Random(config.seed)
        self._pending_config: Optional[ChannelConfig] = None
        self.sent = 0
        self.delivered = 0
        self.dropped_per = 0
        self.dropped_range = 0
        self._delay_sum = 0.0

    def reconfigure(self, config: ChannelConfig) -> None:
        """Stage a new config; it takes effect at the next tick boundary."""
        config.check()
        self._pending_config = config

    def advance_tick(self) -> None:
        if self._pending_config is not None:
            self.config = self._pending_config
            self._pending_config = None

    def delivery_probability(self, distance_m: float) -> float:
        cfg = self.config
        if distance_m <= cfg.r0_m:
            return 1.0
        if distance_m >= cfg.rmax_m:
            return 0.0
        return (cfg.rmax_m - distance_m) / (cfg.rmax_m - cfg.r0_m)

    def transmit(self, payload_hex: str, sender_xy, receiver_xy,
                 send_time_ms: float) -> Optional[tuple[str, float]]:
        """(payload, arrival_time_ms) on delivery, None on drop.

        Draw order is fixed (spatial, PER, then jitter only on delivery) so
        identical transmission sequences replay identically.
        """
        self.sent += 1
        cfg = self.config
        d = math.hypot(receiver_xy[0] - sender_xy[0], receiver_xy[1] - sender_xy[1])
        if self._rng.random() >= self.delivery_probability(d):
            self.dropped_range += 1
            return None
        if self._rng.random() < cfg.per:
            self.dropped_per += 1
            return None
        delay = cfg.base_latency_ms + self._rng.uniform(-cfg.jitter_ms, cfg.jitter_ms)
        self.delivered += 1
        self._delay_sum += delay
        return payload_hex, send_time_ms + delay

    @property
    def mean_delay_ms(self) -> float:
        return self._delay_sum / self.delivered if self.delivered else 0.0

    def counters(self) -> dict:
        return {
            "sent": self.sent,
            "delivered": self.delivered,
            "dropped_per": self.dropped_per,
            "dropped_range": self.dropped_range,
            "mean_delay": self.mean_delay_ms,
        }


def set_network_delay(config: ChannelConfig) -> Channel:
    """Build a deterministic channel from a validated config."""
    return Channel(config)
