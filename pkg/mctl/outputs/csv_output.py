"""CSV artifact output."""

import csv
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from dagster import Config, get_dagster_logger

from mctl.outputs.base_output import BaseOutput, Row
from mctl.utils.metrics import track_metrics


logger = get_dagster_logger()

FUSED_COLUMNS = [
    "tick", "server_time_ms", "joint_id", "x", "y", "z", "objective", "sensor_count", "flags"
]
TRUTH_COLUMNS = ["tick", "joint_id", "x", "y", "z"]
ERROR_SUMMARY_COLUMNS = ["scope", "name", "mae_cm", "std_cm", "samples"]
TIMING_COLUMNS = ["metric", "range_ms", "count", "fraction"]
SYNC_COLUMNS = ["sensor_id", "exchange_idx", "d_ms", "e_ms"]
SUMMARY_COLUMNS = ["metric", "value"]
THRESHOLD_COLUMNS = ["error_range", "threshold", "mean_error_cm", "mean_time_us", "iters_mean"]
METHOD_COLUMNS = ["method", "sensors", "mae_cm", "std_cm", "improvement_pct"]
OCCLUSION_BENCH_COLUMNS = ["pairs", "crossing", "disagreements", "skipped_degenerate"]
CALIBRATION_ERROR_COLUMNS = [
    "sensor_id", "theta_error_rad", "origin_error_cm", "sample_count", "residual_spread"
]


class CsvOutputConfig(Config):
    """Configuration for CSV output."""

    directory: str = "mctl-out"
    filename: str
    create_folders: bool = True


class CsvOutput(BaseOutput):
    """Writes rows as one CSV file with a header line."""

    def __init__(
        self,
        filename: str,
        columns: Sequence[str],
        directory: str = "mctl-out",
        name: Optional[str] = None,
        description: str = "Write rows to a CSV file",
        config: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(name or Path(filename).stem, description, columns, config)
        self.config_obj = CsvOutputConfig(
            directory=directory, filename=filename, **(config or {})
        )

    @property
    def path(self) -> Path:
        return Path(self.config_obj.directory) / self.config_obj.filename

    def _ensure_directory_exists(self) -> bool:
        directory = self.config_obj.directory
        if os.path.isdir(directory):
            return True
        if not self.config_obj.create_folders:
            logger.warning(f"Directory does not exist: {directory}")
            return False
        os.makedirs(directory, exist_ok=True)
        logger.info(f"Created directory: {directory}")
        return True

    @track_metrics
    def output(self, rows: Sequence[Row]) -> bool:
        """Write the rows, replacing any previous file.

        Args:
            rows: Rows carrying at least the configured columns

        Returns:
            True if the file was written, False otherwise
        """
        if not self.can_output(rows):
            logger.error(f"{self.name}: rows are missing columns of {self.columns}")
            return False
        try:
            if not self._ensure_directory_exists():
                return False
            with open(self.path, "w", newline="", encoding="utf-8") as handle:
                writer = csv.DictWriter(handle, fieldnames=self.columns, extrasaction="ignore")
                writer.writeheader()
                writer.writerows(rows)
        except OSError as e:
            logger.error(f"Error writing {self.path}: {str(e)}")
            return False
        logger.info(f"Wrote {len(rows)} rows to {self.path}")
        return True


def write_csv(directory: str, filename: str, columns: Sequence[str], rows: Sequence[Row]) -> Path:
    """Write one artifact; raises OSError when it cannot be written."""
    output = CsvOutput(filename, columns, directory=directory)
    if not output.output(rows):
        raise OSError(f"could not write {output.path}")
    return output.path


def read_csv(path: str) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))
