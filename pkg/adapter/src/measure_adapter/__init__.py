"""Bridge from detector output to cinestyle measurement files."""

from .adapt import adapt
from .config import AdapterConfig, AdapterError

__all__ = ["AdapterConfig", "AdapterError", "adapt"]
