"""Processing stages: calibration, occlusion, synchronization and fusion."""

from mctl.processors.base_processor import BaseProcessor
from mctl.processors.calibration import WandCalibrationProcessor, WandConfig
from mctl.processors.occlusion import OcclusionProcessor
from mctl.processors.trilateration import JointFusionProcessor, SolverConfig

__all__ = [
    "BaseProcessor",
    "JointFusionProcessor",
    "OcclusionProcessor",
    "SolverConfig",
    "WandCalibrationProcessor",
    "WandConfig",
]
