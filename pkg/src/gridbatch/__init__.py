"""Co-simulation of LLM inference clusters and distribution feeders."""

from pathlib import Path

__version__ = "0.1.0"


def data_path(name: str) -> Path:
    """Path to a bundled data file (sample traces, feeder, scenarios)."""
    return Path(__file__).parent / "data" / name
