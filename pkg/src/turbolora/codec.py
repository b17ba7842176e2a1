"""Image <-> frame payload conversion.

An image is sent one row per frame. Each frame payload is a single
1-based row-index byte followed by the row's pixels, so a 225-pixel row
becomes a 226-byte LoRa payload. Rows are dealt round-robin to the
transmitters: in batch ``b`` device ``d`` carries row ``(b - 1) * n + d``.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

MAX_ROWS = 255


class CodecError(ValueError):
    pass


class ReassemblyError(CodecError):
    """Two good frames claimed the same row with different contents."""


@dataclass(frozen=True, eq=False)
class ImageMatrix:
    """8-bit grayscale image, row-major."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        if arr.ndim != 2:
            raise CodecError(f"image must be 2-D, got shape {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise CodecError("pixel values must lie in 0..255")
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def rows(self) -> int:
        return self.pixels.shape[0]

    @property
    def cols(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def zeros(cls, rows: int, cols: int) -> ImageMatrix:
        return cls(np.zeros((rows, cols), dtype=np.uint8))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImageMatrix):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self) -> int:
        return hash((self.pixels.shape, self.pixels.tobytes()))


@dataclass(frozen=True)
class RowRecord:
    row_index: int
    data: bytes

    @property
    def serialized_len(self) -> int:
        return len(self.data) + 1


@dataclass(frozen=True)
class PayloadVector:
    records: tuple[RowRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    @property
    def serialized_len(self) -> int:
        return sum(r.serialized_len for r in self.records)


@dataclass(frozen=True)
class ChunkPlan:
    """Which record each device sends in each synchronized batch.

    ``batches[b]`` is a list of ``(device_id, record)`` pairs, device ids 1-based.
    """

    n_devices: int
    frame_payload_bytes: int
    batches: tuple[tuple[tuple[int, RowRecord], ...], ...]

    @property
    def batch_count(self) -> int:
        return len(self.batches)

    def full_batch_bytes(self) -> int:
        return self.n_devices * self.frame_payload_bytes

    def device_for(self, row_index: int) -> int:
        return (row_index - 1) % self.n_devices + 1

    def records(self) -> dict[int, RowRecord]:
        return {rec.row_index: rec for batch in self.batches for _, rec in batch}


class FrameStatus(enum.Enum):
    GOOD = "good"
    CORRUPT = "corrupt"


@dataclass(frozen=True)
class DamageReport:
    missing: frozenset[int] = field(default_factory=frozenset)
    corrupt: frozenset[int] = field(default_factory=frozenset)

    @property
    def empty(self) -> bool:
        return not self.missing and not self.corrupt

    @property
    def damaged_rows(self) -> frozenset[int]:
        return self.missing | self.corrupt


def vectorize(image: ImageMatrix) -> PayloadVector:
    return PayloadVector(
        tuple(RowRecord(k + 1, image.pixels[k].tobytes()) for k in range(image.rows))
    )


def devectorize(vector: PayloadVector, cols: int) -> ImageMatrix:
    out = np.zeros((len(vector), cols), dtype=np.uint8)
    for k, rec in enumerate(vector.records):
        if rec.row_index != k + 1:
            raise CodecError(f"record {k + 1} carries row index {rec.row_index}")
        out[k] = np.frombuffer(rec.data, dtype=np.uint8)
    return ImageMatrix(out)


def plan_chunks(vector: PayloadVector, n_devices: int) -> ChunkPlan:
    if n_devices < 1:
        raise CodecError("need at least one device")
    records = vector.records
    payload = records[0].serialized_len if records else 1
    batches = []
    for start in range(0, len(records), n_devices):
        chunk = records[start : start + n_devices]
        batches.append(tuple((d + 1, rec) for d, rec in enumerate(chunk)))
    return ChunkPlan(n_devices, payload, tuple(batches))


def batch_count(rows: int, n_devices: int) -> int:
    return math.ceil(rows / n_devices)


def encode_frame_payload(record: RowRecord) -> bytes:
    if not 1 <= record.row_index <= MAX_ROWS:
        raise CodecError(f"row index {record.row_index} does not fit the one-byte index field")
    return bytes([record.row_index]) + record.data


def decode_frame_payload(payload: bytes) -> RowRecord:
    if not payload:
        raise CodecError("empty payload")
    return RowRecord(payload[0], bytes(payload[1:]))


def reassemble(
    frames: Iterable[tuple[int, bytes, FrameStatus]], rows: int, cols: int
) -> tuple[ImageMatrix, DamageReport]:
    """Rebuild an image from whatever frames arrived.

    A row with no good frame is left all-zero and reported as corrupt if a
    bad copy was seen, missing otherwise.
    """
    good: dict[int, bytes] = {}
    bad: set[int] = set()
    for row_index, data, status in frames:
        if not 1 <= row_index <= rows:
            raise CodecError(f"row index {row_index} outside 1..{rows}")
        if status is FrameStatus.CORRUPT:
            bad.add(row_index)
            continue
        data = bytes(data)
        if len(data) != cols:
            raise CodecError(f"row {row_index} has {len(data)} bytes, expected {cols}")
        prior = good.get(row_index)
        if prior is not None and prior != data:
            raise ReassemblyError(f"conflicting good frames for row {row_index}")
        good[row_index] = data

    out = np.zeros((rows, cols), dtype=np.uint8)
    for row_index, data in good.items():
        out[row_index - 1] = np.frombuffer(data, dtype=np.uint8)
    corrupt = frozenset(bad - good.keys())
    missing = frozenset(set(range(1, rows + 1)) - good.keys() - corrupt)
    return ImageMatrix(out), DamageReport(missing=missing, corrupt=corrupt)
