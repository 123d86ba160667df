"""Neural-surrogate borrowing of historical controls for two-endpoint binary trials."""

__version__ = "0.1.0"
