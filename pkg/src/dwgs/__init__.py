"""Spectra of damped wave equations on metric graphs."""

__version__ = "0.1.0"
