"""Search-volume indices and stock returns: lead-lag, AR(1)-X and TVP analysis."""

__version__ = "0.1.0"
