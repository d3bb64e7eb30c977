"""Causal discovery from data with missing values, including weak self-masking."""

__version__ = "0.1.0"
