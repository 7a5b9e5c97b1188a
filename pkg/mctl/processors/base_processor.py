"""Base processor class for all pipeline stages."""

from abc import ABC, abstractmethod
from typing import Any, Dict, Generic, Optional, TypeVar

from dagster import get_dagster_logger


logger = get_dagster_logger()

InT = TypeVar("InT")
OutT = TypeVar("OutT")


class BaseProcessor(ABC, Generic[InT, OutT]):
    """Base class for all processors."""

    name: str
    description: str

    def __init__(
        self,
        name: str,
        description: str,
        config: Optional[Dict[str, Any]] = None,
    ) -> None:
        """Initialize the processor.

        Args:
            name: Processor name
            description: Processor description
            config: Configuration dictionary
        """
        self.name = name
        self.description = description
        self.config = config or {}
        self.processed = 0
        self.failed = 0

    @abstractmethod
    def process(self, data: InT) -> OutT:
        """Process the given data.

        Args:
            data: The data to process

        Returns:
            The stage output
        """

    def safe_process(self, data: InT) -> Optional[OutT]:
        """Process, logging and counting failures instead of raising.

        Args:
            data: The data to process

        Returns:
            The stage output, or None if processing failed
        """
        try:
            result = self.process(data)
        except Exception as e:
            self.failed += 1
            logger.warning(f"Processor {self.name} failed: {str(e)}")
            return None
        self.processed += 1
        return result
