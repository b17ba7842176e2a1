"""Scenario configuration: a flat ``key = value`` text file.

Blank lines and lines starting with ``#`` are skipped. Every key has a
default except ``image_path``; unknown keys are rejected. A relative
``image_path`` or ``output_dir`` is resolved against the config file's
directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .medium import EU868_FREQUENCIES_HZ, ChannelPlan, MediumConfig
from .node import NodeConfig
from .phy import FrameParams, PolicyKind, RegionPolicy

SEED_ENV = "TURBOLORA_SEED"


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(float(x)) for x in text.split(",") if x.strip())


@dataclass(frozen=True)
class ScenarioConfig:
    image_path: str = ""
    scenario_id: str = "scenario"
    output_dir: str = "out"
    n_devices: int = 4
    sleep_s: float = 36.0
    spreading_factor: int = 7
    bandwidth_hz: int = 125_000
    coding_rate_index: int = 1
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_enabled: bool = True
    low_datarate_optimize: bool = False
    frequencies_hz: tuple[int, ...] = EU868_FREQUENCIES_HZ
    background_rate_per_s: float = 0.09
    background_airtime_min_s: float = 0.05
    background_airtime_max_s: float = 0.4
    background_sfs: tuple[int, ...] = (7,)
    random_corrupt_prob: float = 0.0
    random_loss_prob: float = 0.0
    seed: int = 0
    region: str = "duty_cycle"
    duty_cycle_fraction: float = 0.01
    max_dwell_ms: float = 400.0
    sync_jitter_s: float = 0.0
    serial_transfer_s_per_frame: float = 0.0
    nack_latency_s: float = 0.0
    max_retx_cycles: int = 100
    strict_crc: bool = False
    transfer_id: int = 1

    def node_config(self) -> NodeConfig:
        return NodeConfig(
            n_devices=self.n_devices,
            sleep_s=self.sleep_s,
            frame_params=self.frame_params(),
            sync_jitter_s=self.sync_jitter_s,
            serial_transfer_s_per_frame=self.serial_transfer_s_per_frame,
            region=self.region_policy(),
            nack_latency_s=self.nack_latency_s,
            max_retx_cycles=self.max_retx_cycles,
            transfer_id=self.transfer_id,
        )

    def frame_params(self, payload_len_bytes: int = 226) -> FrameParams:
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

    def region_policy(self) -> RegionPolicy:
        try:
            kind = PolicyKind(self.region)
        except ValueError:
            raise ConfigError(f"region must be 'duty_cycle' or 'dwell_time', got {self.region!r}") from None
        return RegionPolicy(kind, duty_cycle_fraction=self.duty_cycle_fraction, max_dwell_ms=self.max_dwell_ms)

    def medium_config(self) -> MediumConfig:
        return MediumConfig(
            background_rate_per_s=self.background_rate_per_s,
            background_airtime_range_s=(self.background_airtime_min_s, self.background_airtime_max_s),
            background_sfs=self.background_sfs,
            random_corrupt_prob=self.random_corrupt_prob,
            random_loss_prob=self.random_loss_prob,
            seed=self.seed,
        )

    def channel_plan(self) -> ChannelPlan:
        return ChannelPlan(self.frequencies_hz, self.bandwidth_hz)

    def validate(self) -> ScenarioConfig:
        """Build every sub-config once so bad values surface as ConfigError."""
        if not self.image_path:
            raise ConfigError("image_path is required")
        try:
            self.node_config()
            self.medium_config()
            plan = self.channel_plan()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if len(plan) < self.n_devices:
            raise ConfigError(f"{self.n_devices} devices need at least {self.n_devices} frequencies")
        return self

    def with_overrides(self, values: dict[str, str]) -> ScenarioConfig:
        return replace(self, **{k: coerce(k, v) for k, v in values.items()})


FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}
_PARSERS = {
    "str": str,
    "int": lambda s: int(s, 0),
    "float": float,
    "bool": _bool,
    "tuple[int, ...]": _int_list,
}


def coerce(key: str, text: str):
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return _PARSERS[FIELD_TYPES[key]](text.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def load_config(path: str | os.PathLike, env: dict[str, str] | None = None) -> ScenarioConfig:
    """Read a config file; ``TURBOLORA_SEED`` in ``env`` overrides its seed."""
    path = Path(path)
    cfg = ScenarioConfig().with_overrides(parse_config_text(path.read_text()))
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        cfg = cfg.with_overrides({"seed": env[SEED_ENV]})
    base = path.parent
    if cfg.image_path and not Path(cfg.image_path).is_absolute():
        cfg = replace(cfg, image_path=str(base / cfg.image_path))
    if not Path(cfg.output_dir).is_absolute():
        cfg = replace(cfg, output_dir=str(base / cfg.output_dir))
    return cfg


def dump_config(cfg: ScenarioConfig) -> str:
    lines = []
    for f in fields(ScenarioConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
