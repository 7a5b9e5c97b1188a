"""Resource definitions for mctl."""

import os
from pathlib import Path
from typing import Dict, Sequence

from dagster import ConfigurableResource, InitResourceContext
from pydantic import Field

from mctl.outputs.csv_output import write_csv


class ArtifactResource(ConfigurableResource):
    """Directory that receives the CSV artifacts of simulation and benchmark assets."""

    output_dir: str = Field(
        default="mctl-out",
        description="Directory for CSV artifacts; created when missing.",
    )

    def setup_for_execution(self, context: InitResourceContext) -> None:
        """Set up the resource for execution."""
        if not os.path.isdir(self.output_dir):
            os.makedirs(self.output_dir, exist_ok=True)
            context.log.info(f"Created artifact directory: {self.output_dir}")

    def path(self, filename: str) -> Path:
        return Path(self.output_dir) / filename

    def write(self, filename: str, columns: Sequence[str], rows: Sequence[Dict]) -> str:
        return str(write_csv(self.output_dir, filename, columns, rows))
