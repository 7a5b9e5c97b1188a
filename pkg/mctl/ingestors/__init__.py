"""Ingestors for mctl."""

from mctl.ingestors.base_ingestor import BaseIngestor
from mctl.ingestors.simulated_ingestor import SimulatedSensorIngestor

__all__ = ["BaseIngestor", "SimulatedSensorIngestor"]
