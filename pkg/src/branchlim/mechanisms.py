"""Branching and immigration mechanisms with finitely many Levy atoms.

The branching mechanism is

    R(lam) = beta*lam - alpha*lam**2 - sum_i w_i * (exp(-lam*u_i) - 1 + lam*comp(u_i))

with ``comp(u) = u`` (linear compensator) or ``u / (1 + u**2)`` (truncated
compensator). The immigration mechanism is

    F(lam) = b*lam + sum_i w_i * (1 - exp(-lam*u_i)).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class LevyAtoms:
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        atoms = tuple((float(u), float(w)) for u, w in self.atoms)
        for u, w in atoms:
            if not (u > 0 and math.isfinite(u)):
                raise ValueError(f"atom location must be positive and finite, got {u!r}")
            if not (w >= 0 and math.isfinite(w)):
                raise ValueError(f"atom weight must be nonnegative and finite, got {w!r}")
        object.__setattr__(self, "atoms", atoms)

    @property
    def locations(self) -> np.ndarray:
        return np.array([u for u, _ in self.atoms])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms])

    def __len__(self):
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    @classmethod
    def of(cls, atoms) -> "LevyAtoms":
        return atoms if isinstance(atoms, LevyAtoms) else cls(tuple(map(tuple, atoms or ())))


def _atoms_field():
    return field(default_factory=LevyAtoms)


@dataclass(frozen=True)
class BranchingMechanism:
    beta: float = 0.0
    alpha: float = 0.0
    mu: LevyAtoms = _atoms_field()
    compensator: str = "linear"

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha!r}")
        if self.compensator not in ("linear", "truncated"):
            raise ValueError(f"compensator must be 'linear' or 'truncated', got {self.compensator!r}")
        object.__setattr__(self, "mu", LevyAtoms.of(self.mu))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "alpha", float(self.alpha))

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = self.beta * lam - self.alpha * lam * lam
        for u, w in self.mu:
            comp = u if self.compensator == "linear" else u / (1.0 + u * u)
            out = out - w * (np.expm1(-lam * u) + lam * comp)
        return float(out) if out.ndim == 0 else out

    def derivative(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = self.beta - 2.0 * self.alpha * lam
        for u, w in self.mu:
            comp = u if self.compensator == "linear" else u / (1.0 + u * u)
            out = out - w * (comp - u * np.exp(-lam * u))
        return float(out) if out.ndim == 0 else out

    @property
    def is_linear(self) -> bool:
        return self.compensator == "linear"

    def to_config(self) -> dict:
        return {
            "beta": self.beta,
            "alpha": self.alpha,
            "mu": [list(a) for a in self.mu],
            "compensator": self.compensator,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "BranchingMechanism":
        unknown = set(cfg) - {"beta", "alpha", "mu", "compensator"}
        if unknown:
            raise ValueError(f"unknown branching mechanism keys: {sorted(unknown)}")
        return cls(
            beta=float(cfg.get("beta", 0.0)),
            alpha=float(cfg.get("alpha", 0.0)),
            mu=LevyAtoms.of(cfg.get("mu", ())),
            compensator=cfg.get("compensator", "linear"),
        )


@dataclass(frozen=True)
class ImmigrationMechanism:
    b: float = 0.0
    m: LevyAtoms = _atoms_field()

    def __post_init__(self):
        if not self.b >= 0:
            raise ValueError(f"immigration drift b must be >= 0, got {self.b!r}")
        object.__setattr__(self, "m", LevyAtoms.of(self.m))
        object.__setattr__(self, "b", float(self.b))

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = self.b * lam
        for u, w in self.m:
            out = out - w * np.expm1(-lam * u)
        return float(out) if out.ndim == 0 else out

    @property
    def is_zero(self) -> bool:
        return self.b == 0 and all(w == 0 for _, w in self.m)

    def to_config(self) -> dict:
        return {"b": self.b, "m": [list(a) for a in self.m]}

    @classmethod
    def from_config(cls, cfg: dict) -> "ImmigrationMechanism":
        unknown = set(cfg) - {"b", "m"}
        if unknown:
            raise ValueError(f"unknown immigration mechanism keys: {sorted(unknown)}")
        return cls(b=float(cfg.get("b", 0.0)), m=LevyAtoms.of(cfg.get("m", ())))


def eval_R(mech: BranchingMechanism, lam):
    if np.any(np.asarray(lam) < 0):
        raise ValueError("R is defined for lambda >= 0")
    return mech(lam)


def eval_F(mech: ImmigrationMechanism, lam):
    if np.any(np.asarray(lam) < 0):
        raise ValueError("F is defined for lambda >= 0")
    return mech(lam)


class Verdict(enum.Enum):
    CONSERVATIVE = "Conservative"
    NOT_CONSERVATIVE = "NotConservative"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class ConservativityResult:
    verdict: Verdict
    reason: str
    table: tuple[tuple[float, float], ...] = ()

    def __bool__(self):
        return self.verdict is Verdict.CONSERVATIVE


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def decade_integrals(R: Callable, n_decades: int = 9, top: float = 0.1):
    """Contributions of each decade ``[top*10**-(j+1), top*10**-j]`` to
    ``int dlam / max(R, 0)``.

    Returns a list of ``(eps, contribution)`` with ``eps`` the lower end of
    the decade; a contribution is ``inf`` when ``R <= 0`` at a node.
    """
    rows = []
    for j in range(n_decades):
        hi = math.log(top) - j * math.log(10.0)
        lo = hi - math.log(10.0)
        s = 0.5 * (hi - lo) * _GL_NODES + 0.5 * (hi + lo)
        lam = np.exp(s)
        r = np.asarray(R(lam), dtype=float)
        if np.any(r <= 0):
            val = math.inf
        else:
            val = float(0.5 * (hi - lo) * np.sum(_GL_WEIGHTS * lam / r))
        rows.append((math.exp(lo), val))
    return rows


def classify_decades(rows, ratio_div: float = 0.9, ratio_conv: float = 0.5, run: int = 4):
    vals = [v for _, v in rows]
    if any(math.isinf(v) for v in vals):
        return Verdict.CONSERVATIVE, "R* vanishes near 0+, so 1/R* is not integrable there"
    ratios = [b / a for a, b in zip(vals, vals[1:])]
    streak = 0
    for r in ratios:
        streak = streak + 1 if r >= ratio_div else 0
        if streak >= run:
            return Verdict.CONSERVATIVE, (
                f"each decade contributes >= {ratio_div} of the previous one for {run} decades"
            )
    if len(ratios) >= run and all(r <= ratio_conv for r in ratios[-run:]):
        return Verdict.NOT_CONSERVATIVE, "partial integrals converge geometrically as eps -> 0+"
    return Verdict.INCONCLUSIVE, "decade contributions neither stabilise nor decay geometrically"


def check_conservative(mech: BranchingMechanism) -> ConservativityResult:
    if mech.is_linear:
        return ConservativityResult(
            Verdict.CONSERVATIVE,
            "linear compensator: R(lam) <= beta*lam near 0+, so 1/R* >= 1/(beta+ * lam) "
            "is not integrable at 0+ (R* = 0 there when beta <= 0)",
        )
    rows = decade_integrals(mech)
    verdict, reason = classify_decades(rows)
    return ConservativityResult(verdict, reason, tuple(rows))
