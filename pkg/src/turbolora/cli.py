"""Command-line entry point.

Subcommands:

    airtime          frame timing breakdown for a set of radio parameters
    run              run a scenario config end to end and write CSV/PGM outputs
    paper-check      recompute the prototype's reported figures
    trace-plot-data  turn a trace.csv into frequency/time scatter points

Exit status: 0 success, 1 a check failed, 2 invalid configuration or
arguments, 3 file I/O failure, 4 transfer gave up at the retry limit.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields, replace
from pathlib import Path

from . import __version__
from .codec import ImageMatrix
from .config import ConfigError, ScenarioConfig, coerce, load_config
from .gateway import TurboGateway
from .medium import Medium
from .node import TransferReport, run_transfer
from .pgm import PGMError, read_pgm, write_pgm
from .phy import (
    NS_PER_S,
    SYNC_SYMBOLS_X4,
    FrameParams,
    RegionPolicy,
    duty_cycle,
    frame_airtime_ns,
    min_off_time_ns,
    payload_symbol_count,
    symbol_time_ns,
)
from .report import MetricsRow, arithmetic_checks, format_checks, metrics_csv, plot_data_csv, trace_csv

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_TRANSFER_FAILED = 4


def cmd_airtime(args: argparse.Namespace) -> int:
    try:
        params = FrameParams(
            spreading_factor=args.sf,
            bandwidth_hz=args.bw,
            coding_rate_index=args.cr,
            preamble_symbols=args.preamble,
            explicit_header=not args.implicit_header,
            crc_enabled=not args.no_crc,
            low_datarate_optimize=args.ldro,
            payload_len_bytes=args.payload,
        )
        region = RegionPolicy(duty_cycle_fraction=args.duty_cycle)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    tsym = symbol_time_ns(params)
    n_payload = payload_symbol_count(params)
    preamble_ns = (4 * params.preamble_symbols + SYNC_SYMBOLS_X4) * tsym // 4
    total = frame_airtime_ns(params)
    off = min_off_time_ns(total, region)
    cycle = total + max(off, int(round(args.sleep * NS_PER_S)))
    print(f"parameters        SF{params.spreading_factor}, {params.bandwidth_hz} Hz, CR 4/{4 + params.coding_rate_index}, "
          f"{params.payload_len_bytes} B, preamble {params.preamble_symbols}, "
          f"crc {'on' if params.crc_enabled else 'off'}, header {'explicit' if params.explicit_header else 'implicit'}, "
          f"ldro {'on' if params.low_datarate_optimize else 'off'}")
    print(f"symbol time       {tsym / 1e6:.6f} ms")
    print(f"payload symbols   {n_payload}")
    print(f"preamble time     {preamble_ns / 1e6:.6f} ms ({params.preamble_symbols} + 4.25 symbols)")
    print(f"total airtime     {total / 1e6:.6f} ms")
    print(f"min off-time      {off / NS_PER_S:.6f} s at {100 * args.duty_cycle:g} % duty cycle")
    print(f"duty cycle        {100 * duty_cycle(total, cycle):.4f} % with {args.sleep:g} s sleep")
    if params == FrameParams():
        print(f"reference         358.7 ms reported for this setting, difference {abs(total / 1e6 - 358.7):.3f} ms")
    return EXIT_OK


def run_scenario(cfg: ScenarioConfig, source: ImageMatrix) -> tuple[MetricsRow, TransferReport, Medium]:
    medium = Medium(cfg.medium_config(), cfg.channel_plan())
    report = run_transfer(source, cfg.node_config(), medium, TurboGateway(strict_crc=cfg.strict_crc))
    row = MetricsRow.from_report(cfg.scenario_id, cfg.seed, report, source)
    return row, report, medium


def write_outputs(out_dir: Path, report: TransferReport, medium: Medium, rows: list[MetricsRow]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.csv").write_text(metrics_csv(rows))
    (out_dir / "trace.csv").write_text(trace_csv(medium.trace))
    write_pgm(out_dir / "final.pgm", report.final_image)
    for k, (image, _) in enumerate(report.snapshots):
        write_pgm(out_dir / f"progress_{k:03d}.pgm", image)


def _replica(cfg: ScenarioConfig) -> MetricsRow:
    source = read_pgm(cfg.image_path)
    row, report, medium = run_scenario(cfg, source)
    write_outputs(Path(cfg.output_dir), report, medium, [row])
    return row


def _load_source(cfg: ScenarioConfig) -> ImageMatrix:
    source = read_pgm(cfg.image_path)
    if source.rows > 255:
        raise ConfigError(f"image has {source.rows} rows; one-byte row index allows at most 255")
    if source.cols + 1 > 255:
        raise ConfigError(f"image rows of {source.cols} pixels do not fit a 255-byte LoRa payload")
    return source


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
        overrides = {
            f.name: getattr(args, f.name) for f in fields(ScenarioConfig) if getattr(args, f.name, None) is not None
        }
        if overrides:
            cfg = cfg.with_overrides(overrides)
        cfg.validate()
        if args.replicas < 1:
            raise ConfigError("--replicas must be >= 1")
        source = _load_source(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, PGMError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    out_dir = Path(cfg.output_dir)
    try:
        if args.replicas == 1:
            row, report, medium = run_scenario(cfg, source)
            write_outputs(out_dir, report, medium, [row])
            rows = [row]
        else:
            replicas = [
                replace(cfg, seed=cfg.seed + k, output_dir=str(out_dir / f"replica_{k:03d}"))
                for k in range(args.replicas)
            ]
            with ProcessPoolExecutor(max_workers=min(args.replicas, os.cpu_count() or 1)) as pool:
                rows = list(pool.map(_replica, replicas))
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "metrics.csv").write_text(metrics_csv(rows))
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    for row in rows:
        status = "complete" if row.completed else "FAILED at retry limit"
        print(f"{row.scenario_id} seed={row.seed}: {status}, {row.cycles} cycles, "
              f"{row.total_sim_seconds:.3f} s simulated, mse {row.image_mse_vs_source:.6g}")
    if not all(r.completed for r in rows):
        return EXIT_TRANSFER_FAILED
    return EXIT_OK


def cmd_paper_check(args: argparse.Namespace) -> int:
    checks = arithmetic_checks()
    print(format_checks(checks))
    return EXIT_CHECK_FAILED if any(c.verdict == "FAIL" for c in checks) else EXIT_OK


def cmd_trace_plot_data(args: argparse.Namespace) -> int:
    try:
        text = Path(args.trace).read_text()
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        out = plot_data_csv(text)
    except (ValueError, KeyError) as exc:
        print(f"bad trace file: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.output:
        try:
            Path(args.output).write_text(out)
        except OSError as exc:
            print(f"I/O error: {exc}", file=sys.stderr)
            return EXIT_IO
    else:
        sys.stdout.write(out)
    return EXIT_OK


class _ConfigValue(argparse.Action):
    """Parse a ``run`` override with the same coercion as the config file."""

    def __call__(self, parser, namespace, values, option_string=None):
        try:
            coerce(self.dest, values)
        except ConfigError as exc:
            parser.error(str(exc))
        setattr(namespace, self.dest, values)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="turbolora", description="Synchronized multi-transmitter LoRa transfer simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("airtime", help="frame airtime breakdown")
    p.add_argument("--payload", type=int, default=226, help="payload bytes (default 226)")
    p.add_argument("--sf", type=int, default=7)
    p.add_argument("--bw", type=int, default=125_000, help="bandwidth in Hz")
    p.add_argument("--cr", type=int, default=1, help="coding rate index, 1 means 4/5")
    p.add_argument("--preamble", type=int, default=8)
    p.add_argument("--no-crc", action="store_true")
    p.add_argument("--implicit-header", action="store_true")
    p.add_argument("--ldro", action="store_true", help="low data rate optimisation")
    p.add_argument("--duty-cycle", type=float, default=0.01)
    p.add_argument("--sleep", type=float, default=36.0, help="sleep after each frame, seconds")
    p.set_defaults(func=cmd_airtime)

    p = sub.add_parser("run", help="run a scenario config file")
    p.add_argument("config")
    p.add_argument("--replicas", type=int, default=1, help="independent seeds seed..seed+N-1, run in parallel")
    for f in fields(ScenarioConfig):
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, action=_ConfigValue, default=None, metavar="VALUE")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("paper-check", help="recompute the reported airtime, duty-cycle and timing figures")
    p.set_defaults(func=cmd_paper_check)

    p = sub.add_parser("trace-plot-data", help="frequency/time scatter data from a trace.csv")
    p.add_argument("trace")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_trace_plot_data)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
