"""Household-level public transport accessibility simulator."""

__version__ = "0.1.0"

from ._kernels import BACKEND as kernel_backend  # noqa: F401
