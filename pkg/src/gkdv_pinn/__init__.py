"""Physics-informed neural networks for generalized KdV on truncated unbounded domains."""

__version__ = "0.1.0"
