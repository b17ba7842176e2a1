"""End node: N LoRa transmitters fired together by one sync trigger.

Each cycle the controller loads one row record into every participating
transmitter over the serial link, fires the sync signal, and the
transmitters then sleep for ``max(sleep_s, regulatory off-time)``. After
the last primary batch, the gateway's NACK list is fed back and the
affected rows are resent from their original transmitters, round after
round, until nothing is outstanding or the retry budget runs out.
"""

from __future__ import annotations

import enum
import itertools
from collections.abc import Iterable
from dataclasses import dataclass, field, replace

import numpy as np

from .codec import ChunkPlan, DamageReport, ImageMatrix, RowRecord, encode_frame_payload, plan_chunks, vectorize
from .frame import Frame
from .gateway import TurboGateway
from .medium import Medium, Outcome, Transmission
from .phy import (
    NS_PER_S,
    FrameParams,
    PolicyKind,
    RegionPolicy,
    check_dwell_ns,
    frame_airtime_ns,
    min_off_time_ns,
)


class ProtocolError(RuntimeError):
    pass


class DutyCycleViolation(ProtocolError):
    pass


class Phase(enum.Enum):
    IDLE = "idle"
    LOADED = "loaded"
    TRANSMITTING = "transmitting"
    SLEEPING = "sleeping"


@dataclass
class DeviceState:
    device_id: int
    channel_hz: int
    buffer: list[RowRecord] = field(default_factory=list)
    phase: Phase = Phase.IDLE
    next_allowed_ns: int = 0
    tx_end_ns: int = 0
    airtime_total_ns: int = 0
    frames_sent: int = 0


@dataclass(frozen=True)
class NodeConfig:
    n_devices: int = 4
    sleep_s: float = 36.0
    frame_params: FrameParams = field(default_factory=FrameParams)
    sync_jitter_s: float = 0.0
    serial_transfer_s_per_frame: float = 0.0
    region: RegionPolicy = field(default_factory=RegionPolicy.eu868)
    nack_latency_s: float = 0.0
    max_retx_cycles: int = 100
    transfer_id: int = 1

    def __post_init__(self) -> None:
        if self.n_devices < 1:
            raise ValueError("n_devices must be >= 1")
        for name in ("sleep_s", "sync_jitter_s", "serial_transfer_s_per_frame", "nack_latency_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.max_retx_cycles < 0:
            raise ValueError("max_retx_cycles must be >= 0")
        if self.transfer_id < 1:
            raise ValueError("transfer_id must be >= 1")


def _ns(seconds: float) -> int:
    return int(round(seconds * NS_PER_S))


@dataclass
class TransferState:
    transfer_id: int
    plan: ChunkPlan
    current_batch: int = 0
    outstanding_nacks: set[int] = field(default_factory=set)
    done: bool = False

    @property
    def primary_sent(self) -> bool:
        return self.current_batch >= self.plan.batch_count


class TurboNode:
    def __init__(self, cfg: NodeConfig, channels_hz: Iterable[int], jitter_rng: np.random.Generator | None = None):
        channels_hz = list(channels_hz)
        if len(channels_hz) < cfg.n_devices:
            raise ValueError(f"{cfg.n_devices} devices need {cfg.n_devices} channels, plan has {len(channels_hz)}")
        self.cfg = cfg
        self.devices = {d: DeviceState(d, channels_hz[d - 1]) for d in range(1, cfg.n_devices + 1)}
        self.jitter_rng = jitter_rng if jitter_rng is not None else np.random.default_rng(0)
        self.clock_ns = 0
        self.airtime_ns = frame_airtime_ns(cfg.frame_params)
        sleep_ns = _ns(cfg.sleep_s)
        if cfg.region.kind is PolicyKind.DUTY_CYCLE:
            self.rest_ns = max(sleep_ns, min_off_time_ns(self.airtime_ns, cfg.region))
        else:
            if not check_dwell_ns(self.airtime_ns, cfg.region):
                raise ValueError(f"frame airtime {self.airtime_ns / 1e6:.3f} ms exceeds the dwell limit")
            self.rest_ns = sleep_ns

    @property
    def cycle_ns(self) -> int:
        return self.airtime_ns + self.rest_ns

    def wake(self, t_ns: int) -> None:
        """Advance device phases to time ``t_ns``."""
        self.clock_ns = max(self.clock_ns, t_ns)
        for dev in self.devices.values():
            if dev.phase is Phase.TRANSMITTING and dev.tx_end_ns <= self.clock_ns:
                dev.phase = Phase.SLEEPING
            if dev.phase is Phase.SLEEPING and dev.next_allowed_ns <= self.clock_ns:
                dev.phase = Phase.IDLE

    def ready_time(self, device_ids: Iterable[int]) -> int:
        return max([self.clock_ns] + [self.devices[d].next_allowed_ns for d in device_ids])

    def load_batch(self, batch: Iterable[tuple[int, RowRecord]]) -> None:
        batch = list(batch)
        for device_id, _ in batch:
            dev = self.devices.get(device_id)
            if dev is None:
                raise ProtocolError(f"no device {device_id}")
            if dev.phase is not Phase.IDLE:
                raise ProtocolError(f"device {device_id} is {dev.phase.value}, cannot load")
        for device_id, record in batch:
            dev = self.devices[device_id]
            dev.buffer.append(record)
            dev.phase = Phase.LOADED
            self.clock_ns += _ns(self.cfg.serial_transfer_s_per_frame)

    def sync_fire(self, t_ns: int, transfer_id: int | None = None) -> list[Transmission]:
        """Trigger every loaded device at ``t_ns``; returns their transmissions."""
        transfer_id = self.cfg.transfer_id if transfer_id is None else transfer_id
        loaded = [dev for dev in self.devices.values() if dev.phase is Phase.LOADED]
        for dev in loaded:
            if t_ns < dev.next_allowed_ns:
                raise DutyCycleViolation(
                    f"device {dev.device_id} fired at {t_ns} ns, not allowed before {dev.next_allowed_ns} ns"
                )
        jitter_ns = _ns(self.cfg.sync_jitter_s)
        sf = self.cfg.frame_params.spreading_factor
        out = []
        for dev in loaded:
            start = t_ns
            if jitter_ns:
                start += int(self.jitter_rng.integers(0, jitter_ns + 1))
            record = dev.buffer.pop(0)
            frame = Frame(dev.device_id, transfer_id, record.row_index, encode_frame_payload(record))
            out.append(Transmission(frame, dev.channel_hz, start, self.airtime_ns, sf))
            dev.phase = Phase.TRANSMITTING
            dev.tx_end_ns = start + self.airtime_ns
            dev.next_allowed_ns = dev.tx_end_ns + self.rest_ns
            dev.airtime_total_ns += self.airtime_ns
            dev.frames_sent += 1
        self.clock_ns = max(self.clock_ns, t_ns)
        return out

    def handle_nack(self, state: TransferState, nack: Iterable[int]) -> list[list[tuple[int, RowRecord]]]:
        """Turn a NACK list into retransmission batches on the original devices."""
        if not state.primary_sent:
            raise ProtocolError("NACK received before all primary batches were sent")
        nack = set(nack)
        records = state.plan.records()
        unknown = nack - records.keys()
        if unknown:
            raise ProtocolError(f"NACK for unknown packet numbers {sorted(unknown)}")
        state.outstanding_nacks = nack
        if not nack:
            state.done = True
            return []
        queues: dict[int, list[RowRecord]] = {}
        for n in sorted(nack):
            queues.setdefault(state.plan.device_for(n), []).append(records[n])
        batches = []
        for row in itertools.zip_longest(*(queues[d] for d in sorted(queues))):
            batches.append([(state.plan.device_for(rec.row_index), rec) for rec in row if rec is not None])
        return batches


@dataclass
class TransferReport:
    transfer_id: int
    completed: bool
    rows: int
    cols: int
    cycles: int
    primary_cycles: int
    retx_cycles: int
    retransmission_rounds: int
    total_sim_ns: int
    frames_sent: int
    frames_good: int
    frames_corrupt: int
    frames_lost: int
    airtime_ns: int
    achieved_duty_cycle: float
    final_image: ImageMatrix
    damage: DamageReport
    nack_history: list[set[int]] = field(default_factory=list)
    snapshots: list[tuple[ImageMatrix, DamageReport]] = field(default_factory=list)
    device_airtime_ns: dict[int, int] = field(default_factory=dict)
    tx_log: list[Transmission] = field(default_factory=list)

    @property
    def total_sim_seconds(self) -> float:
        return self.total_sim_ns / NS_PER_S

    @property
    def images_per_day(self) -> float:
        return 86_400 / self.total_sim_seconds

    @property
    def image_bytes(self) -> int:
        return self.rows * self.cols


def run_transfer(
    image: ImageMatrix,
    cfg: NodeConfig,
    medium: Medium,
    gateway: TurboGateway | None = None,
) -> TransferReport:
    """Send ``image`` end to end and return timing, counts and the received image."""
    gateway = gateway or TurboGateway()
    params = cfg.frame_params.with_payload(image.cols + 1)
    cfg = replace(cfg, frame_params=params)
    plan = plan_chunks(vectorize(image), cfg.n_devices)
    node = TurboNode(cfg, medium.channels.frequencies_hz, medium.jitter_rng)
    state = TransferState(cfg.transfer_id, plan)
    session = gateway.open_session(cfg.transfer_id, image.rows, node.devices.keys())

    counts = {Outcome.DELIVERED: 0, Outcome.CORRUPT: 0, Outcome.LOST: 0}
    tx_log: list[Transmission] = []

    def run_batch(batch, not_before_ns: int = 0) -> None:
        ids = [d for d, _ in batch]
        t = max(node.ready_time(ids), not_before_ns)
        node.wake(t)
        node.load_batch(batch)
        txs = node.sync_fire(node.clock_ns)
        for tx in txs:
            medium.schedule(tx)
        tx_log.extend(txs)
        for result in medium.resolve(max(tx.end_ns for tx in txs)):
            if result.frame is not None:
                gateway.intake(result.frame)
            if result.transmission.frame.transfer_id == cfg.transfer_id:
                counts[result.outcome] += 1

    for batch in plan.batches:
        run_batch(batch)
        state.current_batch += 1
    primary_cycles = plan.batch_count

    retx_cycles = 0
    rounds = 0
    nack_history: list[set[int]] = []
    snapshots = []
    while True:
        # the window is over when every transmitter may send again
        round_end = node.ready_time(node.devices)
        node.wake(round_end)
        for result in medium.resolve(max(round_end, medium.now_ns)):
            if result.frame is not None:
                gateway.intake(result.frame)
        nack = session.close_round()
        nack_history.append(set(nack))
        snapshots.append(session.snapshot_image(image.rows, image.cols))
        batches = node.handle_nack(state, nack)
        if state.done or retx_cycles >= cfg.max_retx_cycles:
            break
        rounds += 1
        not_before = round_end + _ns(cfg.nack_latency_s)
        for batch in batches:
            if retx_cycles >= cfg.max_retx_cycles:
                break
            run_batch(batch, not_before)
            retx_cycles += 1

    final_image, damage = snapshots[-1]
    total_ns = round_end
    device_airtime = {d: dev.airtime_total_ns for d, dev in node.devices.items()}
    achieved = max(device_airtime.values()) / total_ns if total_ns else 0.0
    return TransferReport(
        transfer_id=cfg.transfer_id,
        completed=state.done,
        rows=image.rows,
        cols=image.cols,
        cycles=primary_cycles + retx_cycles,
        primary_cycles=primary_cycles,
        retx_cycles=retx_cycles,
        retransmission_rounds=rounds,
        total_sim_ns=total_ns,
        frames_sent=len(tx_log),
        frames_good=counts[Outcome.DELIVERED],
        frames_corrupt=counts[Outcome.CORRUPT],
        frames_lost=counts[Outcome.LOST],
        airtime_ns=node.airtime_ns,
        achieved_duty_cycle=achieved,
        final_image=final_image,
        damage=damage,
        nack_history=nack_history,
        snapshots=snapshots,
        device_airtime_ns=device_airtime,
        tx_log=tx_log,
    )

