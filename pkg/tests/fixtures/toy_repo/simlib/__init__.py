"""A tiny explicit time-stepping toolkit used as a test corpus."""

__version__ = "1.0"

DEFAULT_SEED = 42
