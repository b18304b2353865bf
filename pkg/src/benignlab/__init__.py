"""Closed-form implicit-bias interpolation for balanced two-layer linear nets,
with risk evaluation and random-matrix diagnostics."""

__version__ = "0.1.0"
