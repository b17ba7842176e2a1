"""Gateway-side transfer sessions.

The gateway hears every frame on its channels. Frames from registered
(device, transfer) pairs are kept; everything else is foreign LoRaWAN
traffic and is ignored. Once the node's transmission window is over the
session produces the NACK list: packets seen with a bad CRC plus packets
never seen at all.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .codec import DamageReport, FrameStatus, ImageMatrix, reassemble
from .frame import Frame


class Verdict(enum.Enum):
    IGNORED = "ignored"
    STORED = "stored"
    DUPLICATE = "duplicate"
    CONFLICT = "conflict"
    BAD_CRC = "bad_crc"
    BAD_CRC_UNREADABLE = "bad_crc_unreadable"
    OUT_OF_RANGE = "out_of_range"


@dataclass(frozen=True)
class IntakeEvent:
    rx_time_ns: int
    device_id: int
    packet_number: int
    verdict: Verdict


@dataclass
class TransferSession:
    """Bookkeeping for one image transfer.

    With ``strict_crc`` a CRC-failed frame's packet number is treated as
    unreadable, so the packet falls into the missing set instead of
    ``bad_crc``. Both routes end up in the same NACK list.
    """

    transfer_id: int
    expected_count: int
    device_ids: frozenset[int]
    strict_crc: bool = False
    good: dict[int, bytes] = field(default_factory=dict)
    bad_crc: set[int] = field(default_factory=set)
    timeline: list[IntakeEvent] = field(default_factory=list)
    rounds: int = 0

    def accepts(self, frame: Frame) -> bool:
        return frame.transfer_id == self.transfer_id and frame.device_id in self.device_ids

    def intake(self, frame: Frame) -> Verdict:
        if not self.accepts(frame):
            return Verdict.IGNORED
        verdict = self._classify(frame)
        self.timeline.append(IntakeEvent(frame.rx_time_ns, frame.device_id, frame.packet_number, verdict))
        return verdict

    def _classify(self, frame: Frame) -> Verdict:
        n = frame.packet_number
        if not frame.crc_ok:
            if self.strict_crc:
                return Verdict.BAD_CRC_UNREADABLE
            if not 1 <= n <= self.expected_count:
                return Verdict.OUT_OF_RANGE
            if n not in self.good:
                self.bad_crc.add(n)
            return Verdict.BAD_CRC
        if not 1 <= n <= self.expected_count:
            return Verdict.OUT_OF_RANGE
        prior = self.good.get(n)
        if prior is not None:
            return Verdict.DUPLICATE if prior == frame.payload else Verdict.CONFLICT
        self.good[n] = bytes(frame.payload)
        self.bad_crc.discard(n)
        return Verdict.STORED

    @property
    def missing(self) -> set[int]:
        return set(range(1, self.expected_count + 1)) - self.good.keys() - self.bad_crc

    @property
    def complete(self) -> bool:
        return len(self.good) == self.expected_count

    def build_nack(self) -> set[int]:
        """Packet numbers to request again; empty once the session is complete."""
        return self.bad_crc | self.missing

    def close_round(self) -> set[int]:
        self.rounds += 1
        return self.build_nack()

    def snapshot_image(self, rows: int, cols: int) -> tuple[ImageMatrix, DamageReport]:
        """Current best image; rows not yet received intact are zero-filled."""
        frames = [(n, payload[1:], FrameStatus.GOOD) for n, payload in self.good.items()]
        frames += [(n, b"", FrameStatus.CORRUPT) for n in self.bad_crc]
        return reassemble(frames, rows, cols)


class TurboGateway:
    """Routes received frames to the matching open session."""

    def __init__(self, strict_crc: bool = False):
        self.strict_crc = strict_crc
        self.sessions: dict[int, TransferSession] = {}
        self.ignored = 0

    def open_session(self, transfer_id: int, expected_count: int, device_ids) -> TransferSession:
        session = TransferSession(transfer_id, expected_count, frozenset(device_ids), strict_crc=self.strict_crc)
        self.sessions[transfer_id] = session
        return session

    def intake(self, frame: Frame) -> Verdict:
        session = self.sessions.get(frame.transfer_id)
        if session is None or not session.accepts(frame):
            self.ignored += 1
            return Verdict.IGNORED
        return session.intake(frame)
