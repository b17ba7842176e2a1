"""LoRa physical-layer timing and regional airtime rules.

Durations are carried as integer nanoseconds internally; the ``*_ns``
functions are exact, the float variants convert to seconds for reporting.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

NS_PER_S = 1_000_000_000

VALID_BANDWIDTHS = (125_000, 250_000, 500_000)
# Preamble is followed by 4.25 symbols of sync word / SFD.
SYNC_SYMBOLS_X4 = 17


@dataclass(frozen=True)
class FrameParams:
    """Radio settings that determine time on air for one frame.

    ``coding_rate_index`` is CR in 4/(4+CR), so 1 means 4/5.
    """

    spreading_factor: int = 7
    bandwidth_hz: int = 125_000
    coding_rate_index: int = 1
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_enabled: bool = True
    low_datarate_optimize: bool = False
    payload_len_bytes: int = 226

    def __post_init__(self) -> None:
        if not 7 <= self.spreading_factor <= 12:
            raise ValueError(f"spreading factor must be 7..12, got {self.spreading_factor}")
        if self.bandwidth_hz not in VALID_BANDWIDTHS:
            raise ValueError(f"bandwidth must be one of {VALID_BANDWIDTHS}, got {self.bandwidth_hz}")
        if self.coding_rate_index not in (1, 2, 3, 4):
            raise ValueError(f"coding rate index must be 1..4, got {self.coding_rate_index}")
        if self.preamble_symbols < 0:
            raise ValueError("preamble_symbols must be >= 0")
        if not 0 <= self.payload_len_bytes <= 255:
            raise ValueError(f"payload must be 0..255 bytes, got {self.payload_len_bytes}")

    def with_payload(self, payload_len_bytes: int) -> FrameParams:
        return FrameParams(
            spreading_factor=self.spreading_factor,
            bandwidth_hz=self.bandwidth_hz,
            coding_rate_index=self.coding_rate_index,
            preamble_symbols=self.preamble_symbols,
            explicit_header=self.explicit_header,
            crc_enabled=self.crc_enabled,
            low_datarate_optimize=self.low_datarate_optimize,
            payload_len_bytes=payload_len_bytes,
        )


class PolicyKind(enum.Enum):
    DUTY_CYCLE = "duty_cycle"
    DWELL_TIME = "dwell_time"


@dataclass(frozen=True)
class RegionPolicy:
    """Channel-access rule: a duty-cycle cap (Region 1) or a dwell limit (Region 2)."""

    kind: PolicyKind = PolicyKind.DUTY_CYCLE
    duty_cycle_fraction: float = 0.01
    max_dwell_ms: float = 400.0

    def __post_init__(self) -> None:
        if self.kind is PolicyKind.DUTY_CYCLE and not 0 < self.duty_cycle_fraction <= 1:
            raise ValueError("duty_cycle_fraction must be in (0, 1]")
        if self.kind is PolicyKind.DWELL_TIME and not self.max_dwell_ms > 0:
            raise ValueError("max_dwell_ms must be > 0")

    @classmethod
    def eu868(cls) -> RegionPolicy:
        return cls(PolicyKind.DUTY_CYCLE, duty_cycle_fraction=0.01)

    @classmethod
    def us915(cls) -> RegionPolicy:
        return cls(PolicyKind.DWELL_TIME, max_dwell_ms=400.0)


class PolicyError(ValueError):
    """Raised when an operation is asked of the wrong kind of region policy."""


def symbol_time_ns(params: FrameParams) -> int:
    # 2**SF * 1e9 / BW is an integer for every allowed SF/BW pair
    return (2**params.spreading_factor * NS_PER_S) // params.bandwidth_hz


def symbol_time(params: FrameParams) -> float:
    """Symbol duration in seconds, 2**SF / BW."""
    return symbol_time_ns(params) / NS_PER_S


def payload_symbol_count(params: FrameParams) -> int:
    """Number of symbols after the preamble, per the SX127x datasheet formula."""
    sf = params.spreading_factor
    crc = 1 if params.crc_enabled else 0
    ih = 0 if params.explicit_header else 1
    de = 1 if params.low_datarate_optimize else 0
    numerator = 8 * params.payload_len_bytes - 4 * sf + 28 + 16 * crc - 20 * ih
    denominator = 4 * (sf - 2 * de)
    # ceil division on integers; avoids float rounding at exact multiples
    blocks = -(-numerator // denominator)
    return 8 + max(blocks * (params.coding_rate_index + 4), 0)


def frame_airtime_ns(params: FrameParams) -> int:
    quarter_symbols = 4 * (params.preamble_symbols + payload_symbol_count(params)) + SYNC_SYMBOLS_X4
    return quarter_symbols * symbol_time_ns(params) // 4


def frame_airtime(params: FrameParams) -> float:
    """Total time on air in seconds: preamble, sync and payload symbols."""
    return frame_airtime_ns(params) / NS_PER_S


def min_off_time_ns(airtime_ns: int, policy: RegionPolicy) -> int:
    """Shortest silence after a frame that keeps the duty cycle within the cap.

    Rounded up to the next nanosecond so the resulting ratio never exceeds
    the configured fraction.
    """
    if policy.kind is not PolicyKind.DUTY_CYCLE:
        raise PolicyError("off-time applies only to duty-cycle regions")
    fraction = Fraction(policy.duty_cycle_fraction)
    return math.ceil(Fraction(airtime_ns) * (1 - fraction) / fraction)


def min_off_time(airtime: float, policy: RegionPolicy) -> float:
    if policy.kind is not PolicyKind.DUTY_CYCLE:
        raise PolicyError("off-time applies only to duty-cycle regions")
    return airtime * (1.0 / policy.duty_cycle_fraction - 1.0)


def duty_cycle(airtime: float, cycle_period: float) -> float:
    """Fraction of ``cycle_period`` spent transmitting. Units just need to agree."""
    if airtime <= 0:
        raise ValueError("airtime must be positive")
    if cycle_period < airtime:
        raise ValueError("cycle period shorter than the airtime it contains")
    return airtime / cycle_period


def check_dwell(airtime: float, policy: RegionPolicy) -> bool:
    """True when a single transmission of ``airtime`` seconds respects the dwell cap.

    The boundary is inclusive: exactly ``max_dwell_ms`` passes.
    """
    if policy.kind is not PolicyKind.DWELL_TIME:
        raise PolicyError("dwell check applies only to dwell-time regions")
    return airtime * 1000.0 <= policy.max_dwell_ms


def check_dwell_ns(airtime_ns: int, policy: RegionPolicy) -> bool:
    if policy.kind is not PolicyKind.DWELL_TIME:
        raise PolicyError("dwell check applies only to dwell-time regions")
    return Fraction(airtime_ns, 1_000_000) <= Fraction(policy.max_dwell_ms)
