"""Asset definitions for mctl."""

from typing import Dict, List, Optional

from dagster import AssetExecutionContext, Config, asset

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
)
from mctl.resources import ArtifactResource
from mctl.sim.benchmarks import (
    run_method_comparison,
    run_occlusion_benchmark,
    run_sync_benchmark,
    run_threshold_benchmark,
)
from mctl.sim.runner import run_scenario
from mctl.sim.scenario import ScenarioConfig, load_scenario


Tables = Dict[str, List[Dict]]

SIMULATION_TABLES = {
    "fused.csv": FUSED_COLUMNS,
    "truth.csv": TRUTH_COLUMNS,
    "errors.csv": ERROR_SUMMARY_COLUMNS,
    "timing.csv": TIMING_COLUMNS,
    "sync.csv": SYNC_COLUMNS,
    "summary.csv": SUMMARY_COLUMNS,
    "calibration.csv": CALIBRATION_ERROR_COLUMNS,
}

BENCHMARK_TABLES = {
    "trilateration.csv": THRESHOLD_COLUMNS,
    "sync_bins.csv": TIMING_COLUMNS,
    "occlusion.csv": OCCLUSION_BENCH_COLUMNS,
    "methods.csv": METHOD_COLUMNS,
}


class ScenarioAssetConfig(Config):
    """Scenario file plus the overrides a run may apply."""

    scenario_path: Optional[str] = None
    seed: Optional[int] = None
    ticks: Optional[int] = None
    occlusion_compensation: Optional[bool] = None
    solver: Optional[str] = None


class BenchmarkConfig(Config):
    seed: int = 0
    trilateration_trials: int = 5000
    sync_exchanges: int = 10000
    sync_jitter_ms: float = 2.0
    occlusion_pairs: int = 10000
    method_trials: int = 1000
    method_sigma_cm: float = 3.0


@asset(group_name="simulation")
def scenario(config: ScenarioAssetConfig) -> ScenarioConfig:
    """Validated scenario of the simulated run."""
    return load_scenario(
        config.scenario_path,
        seed=config.seed,
        ticks=config.ticks,
        occlusion_compensation=config.occlusion_compensation,
        solver=config.solver,
    )


@asset(group_name="simulation")
def simulated_run(context: AssetExecutionContext, scenario: ScenarioConfig) -> Tables:
    """Every table of a full simulated session."""
    result = run_scenario(scenario)
    context.log.info(f"Scenario {scenario.name!r} finished with MAE {result.mae():.3f} cm")
    return {
        "fused.csv": result.fused_rows(),
        "truth.csv": result.truth_rows(),
        "errors.csv": result.error_summary_rows(),
        "timing.csv": result.timing_rows(),
        "sync.csv": result.sync_rows(),
        "summary.csv": result.summary_rows(),
        "calibration.csv": result.calibration_rows(),
    }


@asset(group_name="simulation")
def simulation_artifacts(
    context: AssetExecutionContext, artifacts: ArtifactResource, simulated_run: Tables
) -> List[str]:
    """Simulation tables written as CSV files."""
    paths = [
        artifacts.write(name, SIMULATION_TABLES[name], rows) for name, rows in simulated_run.items()
    ]
    context.log.info(f"Wrote {len(paths)} simulation artifacts to {artifacts.output_dir}")
    return paths


@asset(group_name="benchmarks")
def trilateration_benchmark(config: BenchmarkConfig) -> List[Dict]:
    """Propagation error and solve time per error range and threshold."""
    return run_threshold_benchmark(
        trials=config.trilateration_trials, seed=config.seed, show_progress=False
    )


@asset(group_name="benchmarks")
def sync_benchmark(config: BenchmarkConfig) -> List[Dict]:
    """Clock-error bins over simulated sync exchanges."""
    bench = run_sync_benchmark(
        exchanges=config.sync_exchanges,
        jitter_ms=config.sync_jitter_ms,
        seed=config.seed,
        show_progress=False,
    )
    return [{"metric": "clock_error", **row} for row in bench.bins.rows()]


@asset(group_name="benchmarks")
def occlusion_benchmark(context: AssetExecutionContext, config: BenchmarkConfig) -> List[Dict]:
    """Crossing test against the sampling oracle."""
    row = run_occlusion_benchmark(
        pairs=config.occlusion_pairs, seed=config.seed, show_progress=False
    )
    if row["disagreements"]:
        context.log.error(f"{row['disagreements']} crossing disagreements with the oracle")
    return [row]


@asset(group_name="benchmarks")
def method_comparison(config: BenchmarkConfig) -> List[Dict]:
    """Linear versus nonlinear fusion error."""
    return run_method_comparison(
        trials=config.method_trials,
        sigma=config.method_sigma_cm,
        seed=config.seed,
        show_progress=False,
    )


@asset(group_name="benchmarks")
def benchmark_artifacts(
    context: AssetExecutionContext,
    artifacts: ArtifactResource,
    trilateration_benchmark: List[Dict],
    sync_benchmark: List[Dict],
    occlusion_benchmark: List[Dict],
    method_comparison: List[Dict],
) -> List[str]:
    """Benchmark tables written as CSV files."""
    tables = {
        "trilateration.csv": trilateration_benchmark,
        "sync_bins.csv": sync_benchmark,
        "occlusion.csv": occlusion_benchmark,
        "methods.csv": method_comparison,
    }
    paths = [artifacts.write(name, BENCHMARK_TABLES[name], rows) for name, rows in tables.items()]
    context.log.info(f"Wrote {len(paths)} benchmark artifacts to {artifacts.output_dir}")
    return paths
