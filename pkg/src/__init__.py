"""embodiswap: turn egocentric human-manipulation clips into robot-composited training data."""

__version__ = "0.1.0"
