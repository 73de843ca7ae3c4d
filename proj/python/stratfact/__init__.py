"""Randomization-based design and analysis of stratified 2^K factorial
experiments: stratified assignment, effect estimation with optional
covariate adjustment, conservative variance estimation, and the
replication-study harness."""

from ._stratfact import (
    Design,
    analyze,
    assign,
    build_design,
    chi2_quantile,
    normal_quantile,
    simulate,
)

__all__ = [
    "Design",
    "analyze",
    "assign",
    "build_design",
    "chi2_quantile",
    "normal_quantile",
    "simulate",
]
