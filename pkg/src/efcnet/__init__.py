"""Edge-centric functional connectivity and co-embedding graph networks."""

__version__ = "0.1.0"
