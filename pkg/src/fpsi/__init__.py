"""Two-scale minimizing-movement simulator for a poroelastic solid immersed in a viscous fluid."""

__version__ = "0.1.0"
