"""Surrogate models and benchmark harness for aircraft wall-field prediction."""

__version__ = "0.1.0"
