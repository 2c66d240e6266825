"""File formats for pipeline inputs and artifacts."""

from src.data.formats import FORMAT_VERSION, PoseTable, read_records, write_records

__all__ = [
    "FORMAT_VERSION",
    "PoseTable",
    "read_records",
    "write_records",
]
