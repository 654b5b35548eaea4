"""Conservative gradient interface dynamics above a hard wall."""

__version__ = "0.1.0"
