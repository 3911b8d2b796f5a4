"""Numerical tolerances and resource limits shared across the package."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    pgf_normalization: float = 1e-12
    convexity_slack: float = 1e-9
    semigroup: float = 1e-10
    ode: float = 1e-10
    embed_identity: float = 1e-10
    max_pgf_evals: int = 10_000_000
    population_cap: int = 10**9
    abs_slack: float = 0.01
    z_crit: float = 3.0


TOL = Tolerances()
