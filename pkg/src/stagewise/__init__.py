"""Plan, sequence and learn: staged long-horizon manipulation on a toy tabletop."""

__version__ = "0.1.0"
