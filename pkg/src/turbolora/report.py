"""Metrics and trace CSV output, plus the arithmetic cross-check table."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .codec import ImageMatrix, batch_count
from .medium import TraceRecord
from .node import TransferReport
from .phy import (
    NS_PER_S,
    FrameParams,
    RegionPolicy,
    check_dwell,
    duty_cycle,
    frame_airtime_ns,
    min_off_time,
    payload_symbol_count,
    symbol_time_ns,
)

METRICS_HEADER = (
    "scenario_id",
    "seed",
    "total_sim_seconds",
    "cycles",
    "retransmission_rounds",
    "frames_good",
    "frames_corrupt",
    "frames_lost",
    "achieved_duty_cycle",
    "throughput_bytes_per_s",
    "image_mse_vs_source",
    "completed",
)
TRACE_HEADER = ("time_s", "freq_hz", "device_id", "packet_number", "outcome", "source")
PLOT_HEADER = ("time_s", "freq_mhz", "series")


def fmt(value: float) -> str:
    return f"{value:.6g}"


def fmt_ns(ns: int) -> str:
    sign = "-" if ns < 0 else ""
    ns = abs(ns)
    return f"{sign}{ns // NS_PER_S}.{ns % NS_PER_S:09d}"


def image_mse(a: ImageMatrix, b: ImageMatrix) -> float:
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    return float(np.mean(diff * diff))


@dataclass(frozen=True)
class MetricsRow:
    scenario_id: str
    seed: int
    total_sim_seconds: float
    cycles: int
    retransmission_rounds: int
    frames_good: int
    frames_corrupt: int
    frames_lost: int
    achieved_duty_cycle: float
    throughput_bytes_per_s: float
    image_mse_vs_source: float
    completed: bool

    @classmethod
    def from_report(cls, scenario_id: str, seed: int, report: TransferReport, source: ImageMatrix) -> MetricsRow:
        return cls(
            scenario_id=scenario_id,
            seed=seed,
            total_sim_seconds=report.total_sim_seconds,
            cycles=report.cycles,
            retransmission_rounds=report.retransmission_rounds,
            frames_good=report.frames_good,
            frames_corrupt=report.frames_corrupt,
            frames_lost=report.frames_lost,
            achieved_duty_cycle=report.achieved_duty_cycle,
            throughput_bytes_per_s=report.image_bytes / report.total_sim_seconds,
            image_mse_vs_source=image_mse(report.final_image, source),
            completed=report.completed,
        )

    def cells(self) -> list[str]:
        return [
            self.scenario_id,
            str(self.seed),
            fmt(self.total_sim_seconds),
            str(self.cycles),
            str(self.retransmission_rounds),
            str(self.frames_good),
            str(self.frames_corrupt),
            str(self.frames_lost),
            fmt(self.achieved_duty_cycle),
            fmt(self.throughput_bytes_per_s),
            fmt(self.image_mse_vs_source),
            "true" if self.completed else "false",
        ]


def metrics_csv(rows: list[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for row in rows:
        w.writerow(row.cells())
    return buf.getvalue()


def trace_csv(records: list[TraceRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for r in records:
        w.writerow([fmt_ns(r.time_ns), r.frequency_hz, r.device_id, r.packet_number, r.outcome.value, r.source.value])
    return buf.getvalue()


def plot_data_csv(trace_text: str) -> str:
    """Reduce a trace CSV to (time, MHz, series) points for a frequency/time scatter."""
    reader = csv.DictReader(io.StringIO(trace_text))
    if tuple(reader.fieldnames or ()) != TRACE_HEADER:
        raise ValueError(f"trace header must be {','.join(TRACE_HEADER)}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_HEADER)
    for row in reader:
        series = "background" if row["source"] == "background" else f"turbo_{row['outcome']}"
        w.writerow([row["time_s"], f"{int(row['freq_hz']) / 1e6:.6f}", series])
    return buf.getvalue()


# --- arithmetic cross-check -------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    computed: str
    reference: str
    verdict: str  # PASS, FAIL or DISCREPANCY
    note: str = ""


def _within(value: float, target: float, tol: float) -> str:
    return "PASS" if abs(value - target) <= tol else "FAIL"


def arithmetic_checks(rows: int = 225, n_devices: int = 4, sleep_s: float = 36.0) -> list[Check]:
    """Recompute the prototype's reported figures and compare with the published ones."""
    params = FrameParams(payload_len_bytes=226)
    region = RegionPolicy.eu868()
    n_sym = payload_symbol_count(params)
    tsym_ms = symbol_time_ns(params) / 1e6
    air_ns = frame_airtime_ns(params)
    air_s = air_ns / NS_PER_S
    off_s = min_off_time(air_s, region)
    dc = duty_cycle(air_s, air_s + sleep_s)
    batches = batch_count(rows, n_devices)
    cycle_s = air_s + sleep_s
    reported_total = 56 * 36.36
    single = batch_count(rows, 1)
    eight = batch_count(rows, 8)
    return [
        Check("payload symbols", str(n_sym), "338", "PASS" if n_sym == 338 else "FAIL"),
        Check("symbol time [ms]", f"{tsym_ms:.3f}", "1.02", _within(tsym_ms, 1.02, 0.01)),
        Check("frame airtime [ms]", f"{air_ns / 1e6:.3f}", "358.7", _within(air_ns / 1e6, 358.7, 0.1)),
        Check(
            "min off-time at 1% [s]",
            f"{off_s:.3f}",
            "35.64",
            "PASS" if abs(off_s - 35.64) <= 0.005 else "DISCREPANCY",
            "35.64 = 0.36 s x 99, i.e. airtime rounded to 360 ms first",
        ),
        Check(
            "sleep covers off-time",
            f"{sleep_s:g} >= {off_s:.3f}",
            "36 s sleep",
            "PASS" if sleep_s >= off_s else "FAIL",
        ),
        Check(
            "duty cycle at 36 s sleep [%]",
            f"{100 * dc:.4f}",
            "0.99",
            "PASS" if abs(100 * dc - 0.99) <= 0.005 and dc <= region.duty_cycle_fraction else "FAIL",
        ),
        Check("dwell 400 ms", f"{air_ns / 1e6:.3f} ms", "<= 400 ms", "PASS" if check_dwell(air_s, RegionPolicy.us915()) else "FAIL"),
        Check("batch bytes", str(n_devices * 226), "904", "PASS" if n_devices * 226 == 904 else "FAIL"),
        Check(
            "batch count",
            str(batches),
            "56",
            "PASS" if batches == 56 else "DISCREPANCY",
            f"ceil({rows}/{n_devices}) = {batches}; 56 batches carry only {56 * n_devices} rows",
        ),
        Check("reported accounting 56 x 36.36 [s]", f"{reported_total:.2f}", "2036.16", _within(reported_total, 2036.16, 1e-6)),
        Check("reported total [min]", f"{reported_total / 60:.2f}", "34", _within(reported_total / 60, 34, 0.5)),
        Check(
            "simulated total [s]",
            f"{batches * cycle_s:.2f}",
            "2036.16",
            "PASS" if abs(batches * cycle_s - 2036.16) <= 1.0 else "DISCREPANCY",
            f"{batches} cycles x {cycle_s:.6f} s",
        ),
        Check(
            "images per day",
            f"{86400 / reported_total:.1f}",
            "up to 40",
            "PASS" if 86400 / reported_total >= 40 else "FAIL",
            f"{86400 / (batches * cycle_s):.1f} at the simulated total",
        ),
        Check(
            "single-device slowdown",
            f"{rows / (rows / n_devices):.2f}",
            "4x",
            "PASS" if math.isclose(rows / (rows / n_devices), n_devices) else "FAIL",
            f"cycles {single} vs {batches} (ratio {single / batches:.2f} after rounding up)",
        ),
        Check("8-device cycles", str(eight), "ceil(225/8)", "PASS" if eight == 29 else "FAIL"),
    ]


def format_checks(checks: list[Check]) -> str:
    width = max(len(c.name) for c in checks)
    lines = []
    for c in checks:
        line = f"{c.verdict:<11} {c.name:<{width}}  computed {c.computed:<14} reported {c.reference}"
        if c.note:
            line += f"  ({c.note})"
        lines.append(line)
    return "\n".join(lines)
