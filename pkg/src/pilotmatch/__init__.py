"""Prognostic-score pilot matching for observational studies.

Provides synthetic data generation, propensity/prognostic score models,
optimal matching (fixed-ratio, full, and with-replacement), SATT
estimation, and Rosenbaum gamma-sensitivity analysis.
"""

__version__ = "0.1.0"

RNG_ALGORITHM = "philox4x64/inverse-cdf-normals"
