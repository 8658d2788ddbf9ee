"""Ultra-wideband radar human sensing: simulation and reconstruction."""

__version__ = "0.1.0"
