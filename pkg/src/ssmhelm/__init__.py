"""Abnormal driving detection from drone trajectories with surrogate safety features."""

__version__ = "0.1.0"
