"""Zero-noise extrapolation and VQE on a simulated two-ion trapped-ion processor."""

__version__ = "0.1.0"
