"""Equation-free uncertainty quantification for a stochastic catalytic surface model."""

__version__ = "0.1.0"
