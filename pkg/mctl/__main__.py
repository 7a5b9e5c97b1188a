"""CLI entry point for mctl."""

import argparse
import asyncio
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from dagster import get_dagster_logger

from mctl.outputs.csv_output import (
    CALIBRATION_ERROR_COLUMNS,
    ERROR_SUMMARY_COLUMNS,
    FUSED_COLUMNS,
    METHOD_COLUMNS,
    OCCLUSION_BENCH_COLUMNS,
    SUMMARY_COLUMNS,
    SYNC_COLUMNS,
    THRESHOLD_COLUMNS,
    TIMING_COLUMNS,
    TRUTH_COLUMNS,
    write_csv,
)
from mctl.sim.scenario import ScenarioConfig, load_scenario
from mctl.utils.errors import ConfigError, MocapError


logger = get_dagster_logger()

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def parse_listen(value: str) -> Tuple[str, int]:
    """host:port, or a bare port on the default host."""
    host, _, port = value.rpartition(":")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid address {value!r}; expected host:port")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mctl", description="mctl - distributed motion-capture fusion"
    )
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    serve_parser = subparsers.add_parser("serve", help="Run the fusion server")
    serve_parser.add_argument("--listen", type=parse_listen, help="Address to listen on, host:port")
    serve_parser.add_argument("--fps", type=float, help="Server tick rate")
    serve_parser.add_argument("--config", "-c", help="Server config file (or MCTL_CONFIG)")
    serve_parser.add_argument("--calibration", help="Calibration records file to preload")
    serve_parser.add_argument("--duration", type=float, help="Stop after this many seconds")
    serve_parser.add_argument("--out", help="Output directory for CSV artifacts")

    client_parser = subparsers.add_parser("sim-client", help="Connect one simulated sensor")
    client_parser.add_argument("--scenario", help="Scenario file")
    client_parser.add_argument(
        "--sensor", type=int, required=True, help="Sensor id in the scenario"
    )
    client_parser.add_argument("--connect", type=parse_listen, default=("127.0.0.1", 7600))
    client_parser.add_argument("--duration", type=float, help="Stop after this many seconds")
    client_parser.add_argument("--max-attempts", type=int, help="Give up after this many connects")
    client_parser.add_argument("--seed", type=int, help="Override the scenario seed")

    run_parser = subparsers.add_parser("sim-run", help="Run a full simulated session")
    run_parser.add_argument("--scenario", help="Scenario file")
    run_parser.add_argument("--out", default="mctl-out", help="Output directory")
    run_parser.add_argument("--seed", type=int, help="Override the scenario seed")
    run_parser.add_argument("--ticks", type=int, help="Override the number of ticks")
    run_parser.add_argument("--solver", choices=["nonlinear", "linear"])
    run_parser.add_argument(
        "--no-compensation", action="store_true", help="Fuse every sensor, occluded or not"
    )

    calibrate_parser = subparsers.add_parser("calibrate", help="Wand-calibrate scenario sensors")
    calibrate_parser.add_argument("--scenario", help="Scenario file")
    calibrate_parser.add_argument("--out", default="mctl-out", help="Output directory")
    calibrate_parser.add_argument("--seed", type=int, help="Override the scenario seed")

    trilat_parser = subparsers.add_parser("bench-trilat", help="Threshold versus accuracy suite")
    trilat_parser.add_argument("--trials", type=int, default=5000)
    trilat_parser.add_argument("--seed", type=int, default=0)
    trilat_parser.add_argument("--out", default="mctl-out")
    trilat_parser.add_argument("--no-progress", action="store_true")

    sync_parser = subparsers.add_parser("bench-sync", help="Clock synchronization suite")
    sync_parser.add_argument("--exchanges", type=int, default=10000)
    sync_parser.add_argument("--jitter", type=float, default=2.0, help="Uniform jitter, ms")
    sync_parser.add_argument("--base", type=float, default=5.0, help="Base one-way delay, ms")
    sync_parser.add_argument("--asymmetry", type=float, default=0.0, help="Up minus down, ms")
    sync_parser.add_argument("--seed", type=int, default=0)
    sync_parser.add_argument("--out", default="mctl-out")
    sync_parser.add_argument("--no-progress", action="store_true")

    occlusion_parser = subparsers.add_parser("bench-occlusion", help="Crossing oracle suite")
    occlusion_parser.add_argument("--pairs", type=int, default=10000)
    occlusion_parser.add_argument("--seed", type=int, default=0)
    occlusion_parser.add_argument("--out", default="mctl-out")
    occlusion_parser.add_argument("--no-progress", action="store_true")

    methods_parser = subparsers.add_parser("bench-methods", help="Linear versus nonlinear fusion")
    methods_parser.add_argument("--trials", type=int, default=1000)
    methods_parser.add_argument("--sigma", type=float, default=3.0, help="Position noise, cm")
    methods_parser.add_argument("--seed", type=int, default=0)
    methods_parser.add_argument("--out", default="mctl-out")
    methods_parser.add_argument("--no-progress", action="store_true")

    return parser


def cmd_serve(args: argparse.Namespace) -> int:
    from mctl.processors.calibration import load_calibration_records
    from mctl.protocol.server import serve
    from mctl.utils.config import load_server_config

    overrides: Dict[str, object] = {"fps": args.fps, "output_dir": args.out}
    if args.listen:
        overrides["listen_host"], overrides["listen_port"] = args.listen
    config = load_server_config(args.config, overrides)
    calibration_file = args.calibration or config.calibration_file
    records = load_calibration_records(calibration_file) if calibration_file else None
    try:
        server = asyncio.run(serve(config, records, args.duration))
    except KeyboardInterrupt:
        logger.info("Interrupted")
        return EXIT_OK

    out = config.output_dir
    write_csv(out, "fused.csv", FUSED_COLUMNS, server.fused_rows())
    write_csv(out, "summary.csv", SUMMARY_COLUMNS, server.summary_rows())
    write_csv(out, "timing.csv", TIMING_COLUMNS, server.timing_rows())
    write_csv(out, "sync.csv", SYNC_COLUMNS, [row.model_dump() for row in server.sync_rows])
    return EXIT_OK


def _scenario(args: argparse.Namespace, **overrides: object) -> ScenarioConfig:
    return load_scenario(args.scenario, seed=getattr(args, "seed", None), **overrides)


def cmd_sim_client(args: argparse.Namespace) -> int:
    from mctl.ingestors.simulated_ingestor import SimulatedSensorIngestor
    from mctl.processors.calibration import WandConfig
    from mctl.protocol.client import SensorClient, client_clock, client_loop
    from mctl.utils.models import get_skeleton

    scenario = _scenario(args)
    try:
        spec = scenario.sensor(args.sensor)
    except KeyError:
        raise ConfigError(f"scenario has no sensor {args.sensor}")
    ingestor = SimulatedSensorIngestor(scenario, spec.sensor_id)
    client = SensorClient(
        ingestor,
        get_skeleton(scenario.skeleton),
        WandConfig(
            wand_radius_cm=scenario.wand_radius_cm,
            samples_per_placement=scenario.calibration_samples,
        ),
    )

    def clock() -> int:
        return client_clock() + spec.clock_offset_ms

    async def run() -> None:
        stop = asyncio.Event()
        if args.duration is not None:
            asyncio.get_running_loop().call_later(args.duration, stop.set)
        host, port = args.connect
        await client_loop(client, host, port, clock, stop, args.max_attempts)

    asyncio.run(run())
    logger.info(f"Sensor {client.sensor_id} sent {client.frames_sent} frames")
    return EXIT_OK


def cmd_sim_run(args: argparse.Namespace) -> int:
    from mctl.sim.runner import run_scenario

    overrides: Dict[str, object] = {"ticks": args.ticks, "solver": args.solver}
    if args.no_compensation:
        overrides["occlusion_compensation"] = False
    result = run_scenario(_scenario(args, **overrides))
    out = args.out
    write_csv(out, "fused.csv", FUSED_COLUMNS, result.fused_rows())
    write_csv(out, "truth.csv", TRUTH_COLUMNS, result.truth_rows())
    write_csv(out, "errors.csv", ERROR_SUMMARY_COLUMNS, result.error_summary_rows())
    write_csv(out, "timing.csv", TIMING_COLUMNS, result.timing_rows())
    write_csv(out, "sync.csv", SYNC_COLUMNS, result.sync_rows())
    write_csv(out, "summary.csv", SUMMARY_COLUMNS, result.summary_rows())
    if result.scenario.calibration == "wand":
        write_csv(out, "calibration.csv", CALIBRATION_ERROR_COLUMNS, result.calibration_rows())
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    from mctl.processors.calibration import save_calibration_records
    from mctl.sim.runner import calibrate_scenario
    from mctl.sim.scenario import pose_error, true_pose

    scenario = _scenario(args)
    records = calibrate_scenario(scenario)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    save_calibration_records(str(Path(args.out) / "calibration.txt"), records.values())
    rows = []
    for sid, record in sorted(records.items()):
        rows.append(
            {
                "sensor_id": sid,
                **pose_error(record.pose, true_pose(scenario.sensor(sid))),
                "sample_count": record.sample_count,
                "residual_spread": record.residual_spread,
            }
        )
    write_csv(args.out, "calibration.csv", CALIBRATION_ERROR_COLUMNS, rows)
    return EXIT_OK


def cmd_bench_trilat(args: argparse.Namespace) -> int:
    from mctl.sim.benchmarks import run_threshold_benchmark

    rows = run_threshold_benchmark(
        trials=args.trials, seed=args.seed, show_progress=not args.no_progress
    )
    write_csv(args.out, "trilateration.csv", THRESHOLD_COLUMNS, rows)
    return EXIT_OK


def cmd_bench_sync(args: argparse.Namespace) -> int:
    from mctl.sim.benchmarks import run_sync_benchmark

    bench = run_sync_benchmark(
        exchanges=args.exchanges,
        jitter_ms=args.jitter,
        base_ms=args.base,
        asymmetry_ms=args.asymmetry,
        seed=args.seed,
        show_progress=not args.no_progress,
    )
    bins = [{"metric": "clock_error", **row} for row in bench.bins.rows()]
    write_csv(args.out, "sync_bins.csv", TIMING_COLUMNS, bins)
    write_csv(args.out, "sync.csv", SYNC_COLUMNS, bench.rows)
    return EXIT_OK


def cmd_bench_occlusion(args: argparse.Namespace) -> int:
    from mctl.sim.benchmarks import run_occlusion_benchmark

    row = run_occlusion_benchmark(
        pairs=args.pairs, seed=args.seed, show_progress=not args.no_progress
    )
    write_csv(args.out, "occlusion.csv", OCCLUSION_BENCH_COLUMNS, [row])
    if row["disagreements"]:
        logger.error(f"Crossing test disagrees with the oracle on {row['disagreements']} pairs")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_bench_methods(args: argparse.Namespace) -> int:
    from mctl.sim.benchmarks import run_method_comparison

    rows = run_method_comparison(
        trials=args.trials, sigma=args.sigma, seed=args.seed, show_progress=not args.no_progress
    )
    write_csv(args.out, "methods.csv", METHOD_COLUMNS, rows)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "serve": cmd_serve,
    "sim-client": cmd_sim_client,
    "sim-run": cmd_sim_run,
    "calibrate": cmd_calibrate,
    "bench-trilat": cmd_bench_trilat,
    "bench-sync": cmd_bench_sync,
    "bench-occlusion": cmd_bench_occlusion,
    "bench-methods": cmd_bench_methods,
}


def main(args: Optional[List[str]] = None) -> int:
    """Main entry point for the CLI."""
    parser = build_parser()
    if args is None:
        args = sys.argv[1:]
    parsed_args = parser.parse_args(args)

    command = COMMANDS.get(parsed_args.command)
    if command is None:
        parser.print_help()
        return EXIT_USAGE

    try:
        return command(parsed_args)
    except ConfigError as e:
        print(f"Error: {str(e)}", file=sys.stderr)
        return EXIT_USAGE
    except (MocapError, OSError) as e:
        print(f"Error: {str(e)}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
