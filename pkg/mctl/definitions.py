"""Dagster definitions for mctl."""

from dagster import Definitions, define_asset_job

import mctl.assets as assets
from mctl.resources import ArtifactResource


resources = {
    "artifacts": ArtifactResource(output_dir="mctl-out"),
}

all_assets = [
    # Simulation
    assets.scenario,
    assets.simulated_run,
    assets.simulation_artifacts,
    # Benchmarks
    assets.trilateration_benchmark,
    assets.sync_benchmark,
    assets.occlusion_benchmark,
    assets.method_comparison,
    assets.benchmark_artifacts,
]

simulation_job = define_asset_job(
    name="simulated_session",
    selection=["scenario", "simulated_run", "simulation_artifacts"],
)

benchmark_job = define_asset_job(
    name="benchmark_suites",
    selection=[
        "trilateration_benchmark",
        "sync_benchmark",
        "occlusion_benchmark",
        "method_comparison",
        "benchmark_artifacts",
    ],
)

defs = Definitions(
    assets=all_assets,
    resources=resources,
    jobs=[simulation_job, benchmark_job],
)
