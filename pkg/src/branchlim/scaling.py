"""Scaled generating-function functionals linking discrete and continuous branching.

For a scheme ``(k, gamma_k)`` and offspring/immigration PGFs ``(g_k, h_k)``:

    F_k(lam) = gamma_k * (1 - h_k(1 - lam/k))
    R_k(lam) = k*gamma_k * ((1 - lam/k) - g_k(1 - lam/k))
    S_k(lam) = k*gamma_k * ((1 - lam/k) - g_k(exp(-lam/k)))

Every ``1 - g(.)`` is routed through ``Pgf.complement`` so the large
prefactors do not amplify cancellation error.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TOL
from .errors import DomainError, InfeasibleAtThisK, IterationCapError, UnsupportedMechanism
from .mechanisms import BranchingMechanism, ImmigrationMechanism
from .pgf import FiniteSupport, Mixture, Pgf, Poisson


@dataclass(frozen=True)
class ScalingScheme:
    """``gamma_k = scale * k``; ``gamma0 = scale`` is the limit of gamma_k / k."""

    k: int
    scale: float = 1.0

    def __post_init__(self):
        if self.k < 1 or int(self.k) != self.k:
            raise ValueError("k must be a positive integer")
        if not self.scale > 0:
            raise ValueError("gamma scale must be positive")

    @property
    def gamma_k(self) -> float:
        return self.scale * self.k

    @property
    def gamma0(self) -> float:
        return self.scale

    def steps(self, t: float) -> int:
        """``[gamma_k * t]``."""
        return int(math.floor(self.gamma_k * t + 1e-9))


def _check_range(lam, k):
    arr = np.asarray(lam, dtype=float)
    if np.any(arr < 0) or np.any(arr > k):
        raise DomainError(f"lambda must lie in [0, k={k}]")
    return arr


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def compute_Fk(h_k: Pgf, scheme: ScalingScheme, lam):
    lam = _check_range(lam, scheme.k)
    return _out(scheme.gamma_k * h_k._complement(lam / scheme.k))


def compute_Rk(g_k: Pgf, scheme: ScalingScheme, lam):
    lam = _check_range(lam, scheme.k)
    s = lam / scheme.k
    return _out(scheme.k * scheme.gamma_k * (g_k._complement(s) - s))


def compute_Sk(g_k: Pgf, scheme: ScalingScheme, lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise DomainError("lambda must be >= 0")
    s = -np.expm1(-lam / scheme.k)
    return _out(scheme.k * scheme.gamma_k * (g_k._complement(s) - lam / scheme.k))


def drift_term(g_k: Pgf, scheme: ScalingScheme, lam):
    """``gamma_k * (1 - g_k(exp(-lam/k)))``, whose limit is ``gamma0 * lam``."""
    lam = np.asarray(lam, dtype=float)
    return _out(scheme.gamma_k * g_k._complement(-np.expm1(-lam / scheme.k)))


@dataclass(frozen=True)
class EmbeddedPair:
    g_k: Pgf
    h_k: Pgf
    scheme: ScalingScheme
    coefficients: dict = field(default_factory=dict, compare=False)


def default_gamma_scale(R: BranchingMechanism, F: ImmigrationMechanism) -> float:
    """Smallest k-independent gamma_k / k that keeps both embedded PGFs valid for all k >= 1."""
    return max(
        1.0,
        2.0 * R.alpha + sum(w * u for u, w in R.mu) + max(-R.beta, 0.0),
        F.b + sum(w for _, w in F.m),
    )


def _offspring_coefficients(R: BranchingMechanism, k: int, c: float):
    kk = float(k)
    const = (R.alpha - R.beta / kk + sum(w * (u * kk - 1.0) for u, w in R.mu) / kk**2) / c
    lin = 1.0 + (R.beta / kk - 2.0 * R.alpha - sum(w * u for u, w in R.mu) / kk) / c
    quad = R.alpha / c
    poisson = [(w / (c * kk**2), kk * u) for u, w in R.mu]
    return const, lin, quad, poisson


def _immigration_coefficients(F: ImmigrationMechanism, k: int, c: float):
    gk = c * k
    const = 1.0 - F.b * k / gk - sum(w for _, w in F.m) / gk
    lin = F.b * k / gk
    poisson = [(w / gk, k * u) for u, w in F.m]
    return const, lin, poisson


def _assemble(poly, poisson) -> Pgf:
    poly = [0.0 if abs(c) < 1e-15 else c for c in poly]
    poisson = [(w, rate) for w, rate in poisson if w > 0]
    mass = math.fsum(poly)
    total = mass + math.fsum(w for w, _ in poisson)
    poly = [c / total for c in poly]
    if not poisson:
        while len(poly) > 1 and poly[-1] == 0.0:
            poly.pop()
        return FiniteSupport(tuple(poly))
    comps = [(w / total, Poisson(rate)) for w, rate in poisson]
    if mass > 0:
        comps.insert(0, (mass / total, FiniteSupport(tuple(c / mass for c in poly))))
    return Mixture(tuple(comps))


def _min_feasible_k(R: BranchingMechanism, k: int, c: float):
    kk = k
    while kk < 10**12:
        kk *= 2
        if _offspring_coefficients(R, kk, c)[0] >= -1e-15:
            return kk
    return None


def embed(
    R: BranchingMechanism,
    F: ImmigrationMechanism,
    k: int,
    gamma_scale: float | None = None,
) -> EmbeddedPair:
    """Offspring and immigration PGFs whose scaled functionals reproduce (R, F).

    With ``gamma_k = c*k``:

        g_k(z) = z - R(k(1-z)) / (k gamma_k)
        h_k(z) = 1 - F(k(1-z)) / gamma_k

    Each atom at ``u`` contributes ``exp(-k u (1-z))``, a Poisson(k u)
    generating function, so both are mixtures of a polynomial of degree
    <= 2 and Poisson laws. ``R_k == R`` and ``F_k == F`` on [0, k]
    identically.
    """
    if not R.is_linear:
        raise UnsupportedMechanism("embed needs a linear-compensator branching mechanism")
    c = default_gamma_scale(R, F) if gamma_scale is None else float(gamma_scale)
    scheme = ScalingScheme(int(k), c)
    const, lin, quad, poisson = _offspring_coefficients(R, k, c)
    if const < -1e-15:
        raise InfeasibleAtThisK(
            f"offspring constant coefficient {const:.3e} < 0 at k={k}",
            min_k=_min_feasible_k(R, k, c),
        )
    if lin < -1e-15:
        raise InfeasibleAtThisK(
            f"offspring z coefficient {lin:.3e} < 0 at k={k}; gamma scale must be >= "
            f"{2 * R.alpha + sum(w * u for u, w in R.mu) / k - R.beta / k:.6g}",
        )
    h_const, h_lin, h_poisson = _immigration_coefficients(F, k, c)
    if h_const < -1e-15:
        raise InfeasibleAtThisK(
            f"immigration constant coefficient {h_const:.3e} < 0; gamma scale must be >= "
            f"{F.b + sum(w for _, w in F.m) / k:.6g}",
        )
    g = _assemble([const, lin, quad], poisson)
    h = _assemble([h_const, h_lin], h_poisson)
    coeffs = {
        "g_const": const,
        "g_lin": lin,
        "g_quad": quad,
        "g_poisson": poisson,
        "h_const": h_const,
        "h_lin": h_lin,
        "h_poisson": h_poisson,
    }
    return EmbeddedPair(g, h, scheme, coeffs)


def _steps(rate: float, t: float) -> int:
    return int(math.floor(rate * t + 1e-9))


def composition_functionals(
    g_k: Pgf,
    h_k: Pgf,
    b_k: float,
    c_k: float,
    t: float,
    lam: float,
    steps_per_unit: float | None = None,
    max_evals: int = TOL.max_pgf_evals,
) -> tuple[float, float]:
    """``(g_k^n(z)**c_k, prod_{j<n} h_k(g_k^j(z)))`` with ``z = exp(-lam/b_k)``.

    ``n = [steps_per_unit * t]``; ``steps_per_unit`` defaults to ``b_k``,
    which is the identification b_k = k used for the k-th chain.
    """
    if t < 0 or lam < 0:
        raise DomainError("t and lambda must be >= 0")
    n = _steps(b_k if steps_per_unit is None else steps_per_unit, t)
    if 2 * n > max_evals:
        raise IterationCapError(f"{n} iterations exceeds the cap")
    z = math.exp(-lam / b_k)
    log_phi2 = 0.0
    for _ in range(n):
        hz = h_k(z)
        log_phi2 += math.log(hz) if hz > 0 else -math.inf
        z = g_k(z)
    phi1 = 0.0 if z == 0 else math.exp(c_k * math.log(z))
    return phi1, math.exp(log_phi2)


@dataclass(frozen=True)
class GeneratorTable:
    k: int
    lam: float
    x: np.ndarray
    discrete: np.ndarray
    continuous: np.ndarray
    approx: np.ndarray
    alpha_k: float
    beta_k: float
    S_k: float
    H_k: float

    @property
    def sup_diff(self) -> float:
        return float(np.max(np.abs(self.discrete - self.continuous)))


def _log_ratio(c: float) -> float:
    """``log(1 - c) / (-c)``, equal to 1 at c = 0."""
    return 1.0 if c == 0 else math.log1p(-c) / (-c)


def generator_actions(
    g_k: Pgf,
    h_k: Pgf,
    scheme: ScalingScheme,
    R: BranchingMechanism,
    F: ImmigrationMechanism,
    lam: float,
    x_grid,
) -> GeneratorTable:
    """Discrete and limiting generators applied to ``exp(-lam x)`` on a grid.

    ``discrete``: ``gamma_k [g_k(e^{-lam/k})^{kx} h_k(e^{-lam/k}) - e^{-lam x}]``.
    ``continuous``: ``-e^{-lam x} [x R(lam) + F(lam)]``.
    ``approx`` is the expansion in terms of ``alpha_k``, ``S_k`` and ``H_k``
    without its o(1) remainder.
    """
    if lam <= 0:
        raise DomainError("lambda must be > 0")
    k, gk = scheme.k, scheme.gamma_k
    x = np.asarray(x_grid, dtype=float)
    if np.any(x < 0) or np.any(np.abs(x * k - np.round(x * k)) > 1e-9):
        raise DomainError(f"x grid must lie on the lattice {{0, 1/{k}, 2/{k}, ...}}")
    s = -math.expm1(-lam / k)
    cg = float(g_k.complement(s))
    ch = float(h_k.complement(s))
    log_g = math.log1p(-cg)
    log_h = math.log1p(-ch) if ch < 1 else -math.inf
    base = np.exp(-lam * x)
    discrete = gk * base * np.expm1(k * x * log_g + log_h + lam * x)
    continuous = -base * (x * R(lam) + F(lam))
    a_k, b_k = _log_ratio(cg), _log_ratio(ch)
    S = float(compute_Sk(g_k, scheme, lam))
    H = gk * b_k * ch
    approx = -base * (x * a_k * S + x * gk * (a_k - 1.0) * lam + H)
    return GeneratorTable(k, lam, x, discrete, continuous, approx, a_k, b_k, S, H)


def lemma22_rows(g_k: Pgf, scheme: ScalingScheme, R: BranchingMechanism, lams):
    """Rows ``(k, lam, S_k, R - gamma0 lam^2/2, gap, drift, gamma0 lam, gap)``."""
    rows = []
    for lam in lams:
        S = float(compute_Sk(g_k, scheme, lam))
        target = float(R(lam)) - scheme.gamma0 * lam * lam / 2.0
        d = float(drift_term(g_k, scheme, lam))
        rows.append((scheme.k, float(lam), S, target, abs(S - target), d, scheme.gamma0 * lam,
                     abs(d - scheme.gamma0 * lam)))
    return rows


def convergence_rows(pairs, R: BranchingMechanism, F: ImmigrationMechanism, lams, x_grid):
    """``(k, lam, R_k, S_k, F_k, sup_diff)`` for each embedded pair and lambda."""
    rows = []
    for pair in pairs:
        k = pair.scheme.k
        for lam in lams:
            sup = generator_actions(pair.g_k, pair.h_k, pair.scheme, R, F, lam, x_grid).sup_diff if lam > 0 else 0.0
            rows.append((k, float(lam),
                         float(compute_Rk(pair.g_k, pair.scheme, min(lam, k))),
                         float(compute_Sk(pair.g_k, pair.scheme, lam)),
                         float(compute_Fk(pair.h_k, pair.scheme, min(lam, k))),
                         sup))
    return rows


def write_rows(path, header, rows) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
