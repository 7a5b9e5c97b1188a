"""Outputs for mctl."""

from mctl.outputs.base_output import BaseOutput
from mctl.outputs.csv_output import CsvOutput, read_csv, write_csv

__all__ = ["BaseOutput", "CsvOutput", "read_csv", "write_csv"]
