"""Empirical census of reductions mod p."""
from .census import (
    CensusReport,
    CyclicityResult,
    census,
    compare,
    division_polynomial,
    group_structure,
    is_cyclic,
    koblitz_integral,
    point_count,
    twist_count,
)
from .sieve import prime_count, sieve

__all__ = [
    "CensusReport",
    "CyclicityResult",
    "census",
    "compare",
    "division_polynomial",
    "group_structure",
    "is_cyclic",
    "koblitz_integral",
    "point_count",
    "prime_count",
    "sieve",
    "twist_count",
]
