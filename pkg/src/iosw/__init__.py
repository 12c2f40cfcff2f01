"""Dynamic input-output model with simultaneous price and quantity adjustment."""

__version__ = "0.1.0"
