"""Discrete-event multi-channel radio medium.

Transmissions are placed on a timeline and resolved in windows. Two
transmissions collide when they share a channel and spreading factor and
their closed-open time intervals overlap; both are then delivered with a
failed CRC (no capture effect). Independent random loss and corruption are
applied to node traffic on top of that, and foreign LoRaWAN traffic can be
injected as Poisson arrivals on every channel.

Randomness comes from one seed split into independent streams (one per
channel for background arrivals, one each for corruption, loss and sync
jitter), so changing one knob never shifts the draws of another.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .frame import Frame
from .phy import NS_PER_S

# EU868: three mandatory channels plus the five common TTN extras
EU868_FREQUENCIES_HZ = (
    868_100_000,
    868_300_000,
    868_500_000,
    867_100_000,
    867_300_000,
    867_500_000,
    867_700_000,
    867_900_000,
)

BACKGROUND_TRANSFER_ID = 0


class SchedulingError(ValueError):
    pass


class Source(enum.Enum):
    TURBO_NODE = "turbo"
    BACKGROUND = "background"


class Outcome(enum.Enum):
    DELIVERED = "delivered"
    CORRUPT = "corrupt"
    LOST = "lost"


@dataclass(frozen=True)
class ChannelPlan:
    frequencies_hz: tuple[int, ...] = EU868_FREQUENCIES_HZ
    bandwidth_hz: int = 125_000

    def __post_init__(self) -> None:
        freqs = tuple(int(f) for f in self.frequencies_hz)
        if not freqs:
            raise ValueError("channel plan needs at least one frequency")
        if len(set(freqs)) != len(freqs):
            raise ValueError("channel frequencies must be distinct")
        object.__setattr__(self, "frequencies_hz", freqs)

    def __len__(self) -> int:
        return len(self.frequencies_hz)

    def channel_for(self, device_id: int) -> int:
        return self.frequencies_hz[device_id - 1]


@dataclass(frozen=True)
class Transmission:
    frame: Frame
    frequency_hz: int
    start_ns: int
    airtime_ns: int
    spreading_factor: int
    source: Source = Source.TURBO_NODE

    def __post_init__(self) -> None:
        if self.airtime_ns <= 0:
            raise ValueError("airtime must be positive")

    @property
    def end_ns(self) -> int:
        return self.start_ns + self.airtime_ns

    @property
    def key(self) -> tuple[int, int]:
        return (self.frequency_hz, self.spreading_factor)

    def overlaps(self, other: Transmission) -> bool:
        return self.start_ns < other.end_ns and other.start_ns < self.end_ns


def collides(a: Transmission, b: Transmission) -> bool:
    return a.key == b.key and a.overlaps(b)


@dataclass(frozen=True)
class MediumConfig:
    """Noise knobs for the shared medium.

    The default background rate makes roughly 5 % of SF7 node frames
    collide, which is enough to exercise the retransmission path.
    """

    background_rate_per_s: float = 0.09
    background_airtime_range_s: tuple[float, float] = (0.05, 0.4)
    background_sfs: tuple[int, ...] = (7,)
    random_corrupt_prob: float = 0.0
    random_loss_prob: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.background_rate_per_s < 0:
            raise ValueError("background rate must be >= 0")
        lo, hi = self.background_airtime_range_s
        if not 0 < lo <= hi:
            raise ValueError("background airtime range must satisfy 0 < min <= max")
        if not self.background_sfs or any(not 7 <= sf <= 12 for sf in self.background_sfs):
            raise ValueError("background spreading factors must be in 7..12")
        for name in ("random_corrupt_prob", "random_loss_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def quiet(cls, seed: int = 0, **overrides) -> MediumConfig:
        """No background traffic and no random damage."""
        return cls(background_rate_per_s=0.0, seed=seed, **overrides)


class TraceRecord(NamedTuple):
    time_ns: int
    frequency_hz: int
    device_id: int
    packet_number: int
    outcome: Outcome
    source: Source


@dataclass(frozen=True)
class DeliveryOutcome:
    transmission: Transmission
    outcome: Outcome
    collided: bool
    # what the gateway hears; None when the frame is lost
    frame: Frame | None

    def trace_record(self) -> TraceRecord:
        tx = self.transmission
        return TraceRecord(
            tx.start_ns, tx.frequency_hz, tx.frame.device_id, tx.frame.packet_number, self.outcome, tx.source
        )


def _streams(seed: int, n_channels: int) -> tuple[list[np.random.Generator], np.random.Generator, np.random.Generator, np.random.Generator]:
    root = np.random.SeedSequence(seed)
    arrivals, corrupt, loss, jitter = root.spawn(4)
    per_channel = [np.random.default_rng(s) for s in arrivals.spawn(n_channels)]
    return per_channel, np.random.default_rng(corrupt), np.random.default_rng(loss), np.random.default_rng(jitter)


class _BackgroundSource:
    """Per-channel Poisson arrivals, generated lazily in time order."""

    def __init__(self, cfg: MediumConfig, channels: ChannelPlan, rngs: list[np.random.Generator]):
        self.cfg = cfg
        self.channels = channels
        self.rngs = rngs
        self.next_arrival_ns: list[int] = [self._gap(rng) for rng in rngs] if cfg.background_rate_per_s > 0 else []

    def _gap(self, rng: np.random.Generator) -> int:
        return int(round(rng.exponential(1.0 / self.cfg.background_rate_per_s) * NS_PER_S))

    def _make(self, channel: int, start_ns: int, rng: np.random.Generator) -> Transmission:
        lo, hi = self.cfg.background_airtime_range_s
        airtime_ns = max(1, int(round(rng.uniform(lo, hi) * NS_PER_S)))
        sf = int(self.cfg.background_sfs[rng.integers(len(self.cfg.background_sfs))])
        frame = Frame(
            device_id=int(rng.integers(1 << 24, 1 << 32)),
            transfer_id=BACKGROUND_TRANSFER_ID,
            packet_number=int(rng.integers(1, 1 << 16)),
            payload=rng.integers(0, 256, size=int(rng.integers(10, 52)), dtype=np.uint8).tobytes(),
        )
        return Transmission(frame, self.channels.frequencies_hz[channel], start_ns, airtime_ns, sf, Source.BACKGROUND)

    def take_until(self, until_ns: int) -> list[Transmission]:
        """All arrivals with start strictly before ``until_ns`` not yet taken."""
        out = []
        for ch, rng in enumerate(self.rngs[: len(self.next_arrival_ns)]):
            t = self.next_arrival_ns[ch]
            while t < until_ns:
                out.append(self._make(ch, t, rng))
                t += self._gap(rng)
            self.next_arrival_ns[ch] = t
        out.sort(key=lambda tx: (tx.start_ns, tx.frequency_hz))
        return out


def generate_background(horizon_s: float, cfg: MediumConfig, channels: ChannelPlan | None = None) -> list[Transmission]:
    """Background frames over ``[0, horizon_s)``, reproducible from ``cfg.seed``.

    Identical to what a :class:`Medium` built from the same config injects.
    """
    if horizon_s <= 0:
        raise ValueError("horizon must be positive")
    channels = channels or ChannelPlan()
    per_channel, *_ = _streams(cfg.seed, len(channels))
    return _BackgroundSource(cfg, channels, per_channel).take_until(int(round(horizon_s * NS_PER_S)))


@dataclass
class _Pending:
    seq: int
    tx: Transmission


class Medium:
    """Event timeline for one simulation run. Single owner; not thread-safe."""

    def __init__(self, cfg: MediumConfig | None = None, channels: ChannelPlan | None = None):
        self.cfg = cfg or MediumConfig()
        self.channels = channels or ChannelPlan()
        per_channel, self._corrupt_rng, self._loss_rng, self.jitter_rng = _streams(self.cfg.seed, len(self.channels))
        self._background = _BackgroundSource(self.cfg, self.channels, per_channel)
        self.now_ns = 0
        self._seq = 0
        self._pending: list[_Pending] = []
        # resolved transmissions that may still overlap something unresolved
        self._recent: dict[tuple[int, int], list[Transmission]] = {}
        self.trace: list[TraceRecord] = []

    def schedule(self, tx: Transmission) -> None:
        if tx.start_ns < self.now_ns:
            raise SchedulingError(f"transmission at {tx.start_ns} ns is before current time {self.now_ns} ns")
        self._pending.append(_Pending(self._seq, tx))
        self._seq += 1

    @property
    def pending(self) -> list[Transmission]:
        return [p.tx for p in sorted(self._pending, key=lambda p: (p.tx.start_ns, p.seq))]

    def resolve(self, window_end_ns: int) -> list[DeliveryOutcome]:
        """Settle every transmission that has ended by ``window_end_ns``.

        Outcomes come back ordered by (start time, scheduling order).
        """
        if window_end_ns < self.now_ns:
            raise SchedulingError("cannot resolve a window that ends in the past")
        for tx in self._background.take_until(window_end_ns):
            self.schedule(tx)

        ready = sorted((p for p in self._pending if p.tx.end_ns <= window_end_ns), key=lambda p: (p.tx.start_ns, p.seq))
        ready_ids = {id(p) for p in ready}
        remaining = [p for p in self._pending if id(p) not in ready_ids]

        collided_ids = self._collided(ready)
        outcomes = []
        for p in ready:
            tx = p.tx
            collided = id(p) in collided_ids
            outcome = self._draw(tx, collided)
            frame = None
            if outcome is not Outcome.LOST:
                frame = tx.frame.received(
                    crc_ok=outcome is Outcome.DELIVERED, rx_time_ns=tx.end_ns, frequency_hz=tx.frequency_hz
                )
            result = DeliveryOutcome(tx, outcome, collided, frame)
            outcomes.append(result)
            self.trace.append(result.trace_record())

        for p in ready:
            self._recent.setdefault(p.tx.key, []).append(p.tx)
        self._pending = remaining
        self.now_ns = window_end_ns
        self._prune()
        return outcomes

    def _collided(self, ready: list[_Pending]) -> set[int]:
        """ids of the ``ready`` entries that overlap anything on their (channel, SF)."""
        wanted = {id(p) for p in ready}
        groups: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
        for p in self._pending:
            groups.setdefault(p.tx.key, []).append((p.tx.start_ns, p.tx.end_ns, id(p)))
        for key, recent in self._recent.items():
            if key in groups:
                groups[key].extend((tx.start_ns, tx.end_ns, 0) for tx in recent)
        hit: set[int] = set()
        for spans in groups.values():
            if not any(ident in wanted for _, _, ident in spans):
                continue
            spans.sort()
            max_end_before = None
            for i, (start, end, ident) in enumerate(spans):
                earlier = max_end_before is not None and max_end_before > start
                # the next span in start order is the earliest-starting later one
                later = i + 1 < len(spans) and spans[i + 1][0] < end
                if ident in wanted and (earlier or later):
                    hit.add(ident)
                max_end_before = end if max_end_before is None else max(max_end_before, end)
        return hit

    def _draw(self, tx: Transmission, collided: bool) -> Outcome:
        if tx.source is Source.BACKGROUND:
            return Outcome.CORRUPT if collided else Outcome.DELIVERED
        # always consume both draws so outcomes stay aligned across settings
        u_loss = self._loss_rng.random()
        u_corrupt = self._corrupt_rng.random()
        if collided:
            return Outcome.CORRUPT
        if u_loss < self.cfg.random_loss_prob:
            return Outcome.LOST
        if u_corrupt < self.cfg.random_corrupt_prob:
            return Outcome.CORRUPT
        return Outcome.DELIVERED

    def _prune(self) -> None:
        horizon = min([self.now_ns] + [p.tx.start_ns for p in self._pending])
        for key in list(self._recent):
            kept = [tx for tx in self._recent[key] if tx.end_ns > horizon]
            if kept:
                self._recent[key] = kept
            else:
                del self._recent[key]
