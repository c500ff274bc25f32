"""Chance-constrained AC-OPF with hybrid (linear + Gaussian-process) grid models."""

__version__ = "0.1.0"

from .grid import GridCase, IoSchema, load_case, io_schema  # noqa: F401
