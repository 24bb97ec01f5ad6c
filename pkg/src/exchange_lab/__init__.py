"""Exchange symmetry of identical particles on configuration-space grids."""

__version__ = "0.1.0"
