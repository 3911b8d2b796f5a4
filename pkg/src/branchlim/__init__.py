"""Galton-Watson chains with immigration and their continuous-state limits."""

__version__ = "0.1.0"

from .cbi import (
    CbiLaw,
    PsiSolution,
    joint_laplace,
    laplace_transform,
    quadratic_psi_oracle,
    semigroup_check,
    solve_psi,
)
from .dbi import DbiPath, DbiProcess, sample_at_steps, simulate_path, transition_pgf
from .kernels import BACKEND
from .mechanisms import (
    BranchingMechanism,
    ImmigrationMechanism,
    Verdict,
    check_conservative,
    eval_F,
    eval_R,
)
from .pgf import (
    FiniteSupport,
    Geometric,
    Mixture,
    Pgf,
    PointMass,
    Poisson,
    compose_iterate,
    eval_pgf,
    pgf_mean,
    sample_offspring,
)
from .rng import RngSeed
from .scaling import (
    ScalingScheme,
    composition_functionals,
    compute_Fk,
    compute_Rk,
    compute_Sk,
    embed,
    generator_actions,
)

__all__ = [
    "BACKEND", "BranchingMechanism", "CbiLaw", "DbiPath", "DbiProcess", "FiniteSupport",
    "Geometric", "ImmigrationMechanism", "Mixture", "Pgf", "PointMass", "Poisson",
    "PsiSolution", "RngSeed", "ScalingScheme", "Verdict", "check_conservative",
    "compose_iterate", "composition_functionals", "compute_Fk", "compute_Rk", "compute_Sk",
    "embed", "eval_F", "eval_R", "eval_pgf", "generator_actions", "joint_laplace",
    "laplace_transform", "pgf_mean", "quadratic_psi_oracle", "sample_at_steps",
    "sample_offspring", "semigroup_check", "simulate_path", "solve_psi", "transition_pgf",
]
