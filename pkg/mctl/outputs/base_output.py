"""Base output class for all outputs."""

from abc import ABC, abstractmethod
from typing import Any, Dict, List, Mapping, Optional, Sequence


Row = Mapping[str, Any]


class BaseOutput(ABC):
    """Base class for all outputs.

    An output persists a table of rows, one mapping per row, with a fixed set
    of columns.
    """

    name: str
    description: str
    columns: List[str]

    def __init__(
        self,
        name: str,
        description: str,
        columns: Sequence[str],
        config: Optional[Dict[str, Any]] = None,
    ) -> None:
        """Initialize the output.

        Args:
            name: Output name
            description: Output description
            columns: Column names, in output order
            config: Configuration dictionary
        """
        self.name = name
        self.description = description
        self.columns = list(columns)
        self.config = config or {}

    def can_output(self, rows: Sequence[Row]) -> bool:
        """Check that every row carries every column.

        Args:
            rows: Rows to check

        Returns:
            True if this output can write the rows, False otherwise
        """
        return all(set(self.columns) <= set(row) for row in rows)

    @abstractmethod
    def output(self, rows: Sequence[Row]) -> bool:
        """Output the given rows.

        Args:
            rows: Rows to output

        Returns:
            True if output succeeded, False otherwise
        """
