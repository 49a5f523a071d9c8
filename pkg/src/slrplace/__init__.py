"""Analytic placement for multi-die FPGAs with SLL and clock-region awareness."""

__version__ = "0.1.0"
