"""Multi-view compound-target affinity prediction with a numpy autodiff engine."""

__version__ = "0.1.0"
