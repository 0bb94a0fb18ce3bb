"""Numerical services: one module per stage of the radar enhancement pipeline."""
