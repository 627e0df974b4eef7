"""Numerical toolkit for rank-one perturbations of compact normal operators."""

from .spectral_core import SpectralData, TailRule, generate, validate

__all__ = ["SpectralData", "TailRule", "generate", "validate"]
__version__ = "0.1.0"
