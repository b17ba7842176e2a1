"""Exit criteria, one test per criterion; a PASS/FAIL line each is printed in the summary."""

import csv
import io
import time

import numpy as np

from turbolora.cli import main
from turbolora.codec import FrameStatus, ImageMatrix, plan_chunks, reassemble, vectorize
from turbolora.frame import Frame
from turbolora.medium import ChannelPlan, Medium, MediumConfig, Outcome, Transmission
from turbolora.node import NodeConfig, run_transfer
from turbolora.phy import (
    NS_PER_S,
    FrameParams,
    RegionPolicy,
    duty_cycle,
    frame_airtime,
    payload_symbol_count,
    symbol_time,
)
from turbolora.pgm import write_pgm
from turbolora.report import arithmetic_checks

from conftest import nonzero_image, record_criterion

CYCLE_S = 36 + 0.358656


def test_01_airtime_reproduction():
    p = FrameParams(payload_len_bytes=226, spreading_factor=7, coding_rate_index=1, crc_enabled=True, explicit_header=True)
    n = payload_symbol_count(p)
    air_ms = frame_airtime(p) * 1e3
    ok = n == 338 and abs(air_ms - 358.656) < 1e-9 and abs(air_ms - 358.7) <= 0.1
    record_criterion(1, "airtime reproduction", ok, f"{n} symbols, {air_ms:.3f} ms (reported 358.7, tol 0.1 ms)")
    assert ok


def test_02_symbol_time():
    ms = symbol_time(FrameParams(spreading_factor=7, bandwidth_hz=125_000)) * 1e3
    ok = abs(ms - 1.024) < 1e-12 and abs(ms - 1.02) <= 0.01
    record_criterion(2, "symbol time", ok, f"{ms:.3f} ms (reported 1.02, tol 0.01 ms)")
    assert ok


def test_03_duty_cycle():
    dc = duty_cycle(0.358656, 0.358656 + 36.0)
    pct = 100 * dc
    ok = abs(pct - 0.99) <= 0.005 and dc < RegionPolicy.eu868().duty_cycle_fraction
    record_criterion(3, "duty cycle", ok, f"{pct:.4f} % (reported 0.99, tol 0.005 pp; < 1 %)")
    assert ok


def test_04_end_to_end_lossless(tmp_path, capsys):
    image = nonzero_image(225, 225, seed=225)
    write_pgm(tmp_path / "in.pgm", image)
    cfg = tmp_path / "lossless.cfg"
    cfg.write_text("image_path = in.pgm\noutput_dir = out\nn_devices = 4\nsleep_s = 36\nbackground_rate_per_s = 0\n")

    t0 = time.perf_counter()
    status = main(["run", str(cfg)])
    wall = time.perf_counter() - t0
    identical = (tmp_path / "out" / "final.pgm").read_bytes() == (tmp_path / "in.pgm").read_bytes()

    report = run_transfer(image, NodeConfig(n_devices=4, sleep_s=36.0), Medium(MediumConfig.quiet()))
    total = report.total_sim_seconds
    expected = 57 * CYCLE_S

    checks = {c.name: c for c in arithmetic_checks()}
    accounting = checks["reported accounting 56 x 36.36 [s]"]
    batches = checks["batch count"]
    capsys.readouterr()
    ok = (
        status == 0
        and identical
        and report.final_image == image
        and report.cycles == 57
        and abs(total - expected) <= 1e-3
        and round(total, 2) == 2072.44
        and accounting.verdict == "PASS"
        and abs(56 * 36.36 - 2036.16) < 1e-9
        and batches.verdict == "DISCREPANCY"
        and batches.computed == "57"
        and wall < 5.0
    )
    record_criterion(
        4,
        "end-to-end lossless transfer",
        ok,
        f"bit-identical={identical}, {report.cycles} cycles, {total:.6f} s (expect {expected:.6f}), "
        f"56x36.36={accounting.computed} {accounting.verdict}, batch count {batches.verdict}, wall {wall:.2f} s",
    )
    assert ok


def test_05_parallelism_speedup():
    image = nonzero_image(225, 225, seed=5)
    cycles = {
        n: run_transfer(image, NodeConfig(n_devices=n), Medium(MediumConfig.quiet())).cycles for n in (1, 4, 8)
    }
    ratio = cycles[1] / cycles[4]
    ok = (
        cycles[1] == 225
        and cycles[4] == 57
        and cycles[8] == 29
        and cycles[1] == 4 * (225 / 4)
        and abs(ratio - 3.95) < 0.005
    )
    record_criterion(
        5, "parallelism speedup", ok, f"cycles 1/4/8 devices = {cycles[1]}/{cycles[4]}/{cycles[8]}, ratio {ratio:.3f}"
    )
    assert ok


class _LoseOnce(Medium):
    def __init__(self, packets):
        super().__init__(MediumConfig.quiet())
        self.pending_loss = set(packets)

    def _draw(self, tx, collided):
        outcome = super()._draw(tx, collided)
        if tx.frame.packet_number in self.pending_loss:
            self.pending_loss.discard(tx.frame.packet_number)
            return Outcome.LOST
        return outcome


def test_06_damage_rendering():
    image = nonzero_image(225, 225, seed=6)
    assert all(image.pixels[k].any() for k in range(225))
    report = run_transfer(image, NodeConfig(), _LoseOnce({10, 42}))
    snap, damage = report.snapshots[0]
    zero_rows = {k + 1 for k in range(225) if not snap.pixels[k].any()}
    ok = zero_rows == {10, 42} and damage.missing == {10, 42} and report.final_image == image
    record_criterion(6, "damage rendering", ok, f"zero rows after primary round {sorted(zero_rows)}")
    assert ok


def test_07_nack_convergence():
    image = nonzero_image(225, 225, seed=7)
    failures = []
    worst = 0
    for seed in range(100):
        r = run_transfer(image, NodeConfig(max_retx_cycles=100), Medium(MediumConfig.quiet(seed=seed, random_corrupt_prob=0.2)))
        shrinking = all(b <= a for a, b in zip(r.nack_history, r.nack_history[1:]))
        worst = max(worst, r.retx_cycles)
        if not (r.completed and r.retx_cycles <= 100 and r.final_image == image and shrinking):
            failures.append(seed)
    ok = not failures
    record_criterion(7, "NACK convergence", ok, f"100 seeds at 20 % corruption, failures {failures}, max retx cycles {worst}")
    assert ok


def _brute(a, b):
    same = a.frequency_hz == b.frequency_hz and a.spreading_factor == b.spreading_factor
    return same and max(a.start_ns, b.start_ns) < min(a.start_ns + a.airtime_ns, b.start_ns + b.airtime_ns)


def test_08_collision_oracle():
    rng = np.random.default_rng(8)
    freqs = ChannelPlan().frequencies_hz[:2]
    mismatches = 0
    for k in range(10_000):
        pair = []
        for j in range(2):
            start = int(rng.integers(0, 1_000_000_000))
            # exact boundary touches in a share of the cases
            if j == 1 and rng.random() < 0.1:
                start = pair[0].start_ns + pair[0].airtime_ns
            pair.append(
                Transmission(
                    Frame(j + 1, 1, j + 1, b"\x01"),
                    int(freqs[rng.integers(0, 2)]),
                    start,
                    int(rng.integers(1, 600_000_000)),
                    int(rng.integers(7, 9)),
                )
            )
        m = Medium(MediumConfig.quiet())
        for tx in sorted(pair, key=lambda t: t.start_ns):
            m.schedule(tx)
        verdicts = [o.collided for o in m.resolve(max(t.end_ns for t in pair))]
        expected = _brute(pair[0], pair[1])
        if verdicts != [expected, expected]:
            mismatches += 1
    ok = mismatches == 0
    record_criterion(8, "collision model oracle", ok, f"10000 random pairs, {mismatches} mismatches")
    assert ok


def test_09_codec_properties():
    rng = np.random.default_rng(9)
    bad_roundtrip = bad_perm = 0
    for _ in range(1000):
        rows = int(rng.integers(1, 256))
        cols = int(rng.integers(1, 513))
        src = ImageMatrix(rng.integers(0, 256, size=(rows, cols), dtype=np.uint8))
        plan = plan_chunks(vectorize(src), int(rng.integers(1, 9)))
        frames = [(rec.row_index, rec.data, FrameStatus.GOOD) for batch in plan.batches for _, rec in batch]
        out, damage = reassemble(frames, rows, cols)
        bad_roundtrip += not (out == src and damage.empty)
        shuffled = [frames[i] for i in rng.permutation(len(frames))]
        bad_perm += not (reassemble(shuffled, rows, cols)[0] == out)
    ok = bad_roundtrip == 0 and bad_perm == 0
    record_criterion(9, "codec property suite", ok, f"1000 images, round-trip failures {bad_roundtrip}, permutation failures {bad_perm}")
    assert ok


def test_10_determinism(tmp_path, capsys):
    image = nonzero_image(225, 225, seed=10)
    write_pgm(tmp_path / "in.pgm", image)
    outputs = []
    for run in ("a", "b"):
        cfg = tmp_path / f"{run}.cfg"
        cfg.write_text(
            f"image_path = in.pgm\noutput_dir = out_{run}\nseed = 1234\n"
            "random_corrupt_prob = 0.1\nrandom_loss_prob = 0.02\nsync_jitter_s = 0.005\nbackground_rate_per_s = 0.2\n"
        )
        assert main(["run", str(cfg)]) == 0
        out = tmp_path / f"out_{run}"
        outputs.append(((out / "metrics.csv").read_bytes(), (out / "trace.csv").read_bytes()))
    capsys.readouterr()
    rows = list(csv.DictReader(io.StringIO(outputs[0][0].decode())))
    ok = outputs[0] == outputs[1] and int(rows[0]["retransmission_rounds"]) > 0
    record_criterion(10, "determinism", ok, f"metrics.csv and trace.csv byte-identical: {outputs[0] == outputs[1]}")
    assert ok
