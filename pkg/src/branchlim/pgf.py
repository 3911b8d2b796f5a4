"""Probability generating functions: evaluation, iteration and sampling.

Five laws are supported. ``FiniteSupport``, ``Geometric``, ``Poisson`` and
``PointMass`` are the basic ones; ``Mixture`` is a convex combination of
those and is what the scaling constructions produce (polynomial part plus
Poisson components).

All PGFs accept scalar or array ``z`` and are immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .config import TOL
from .errors import DomainError, IterationCapError

ALIAS_THRESHOLD = 16


def _check_unit(z, name="z"):
    arr = np.asarray(z, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
        raise DomainError(f"{name} must lie in [0, 1], got {z!r}")
    return arr


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


class Pgf:
    """Base class. Subclasses implement the law-specific pieces."""

    def __call__(self, z):
        return _scalar(self._eval(np.asarray(z, dtype=float)))

    def _eval(self, z):
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def factorial_moment2(self) -> float:
        """Second factorial moment g''(1)."""
        raise NotImplementedError

    @property
    def variance(self) -> float:
        m = self.mean
        return self.factorial_moment2 + m - m * m

    def complement(self, s):
        """``1 - g(1 - s)`` for s in [0, 1], evaluated without cancellation."""
        return _scalar(self._complement(np.asarray(s, dtype=float)))

    def _complement(self, s):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def sum_of(self, rng: np.random.Generator, counts) -> np.ndarray:
        """Sum of ``counts[i]`` i.i.d. draws, for every entry of ``counts``."""
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class FiniteSupport(Pgf):
    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if not w:
            raise ValueError("FiniteSupport needs at least one weight")
        if any(x < 0 or not math.isfinite(x) for x in w):
            raise ValueError("FiniteSupport weights must be finite and nonnegative")
        if abs(math.fsum(w) - 1.0) > TOL.pgf_normalization:
            raise ValueError(f"FiniteSupport weights sum to {math.fsum(w)!r}, not 1")
        object.__setattr__(self, "weights", w)

    @cached_property
    def _w(self) -> np.ndarray:
        w = np.array(self.weights)
        return w / w.sum()

    def _eval(self, z):
        # Horner
        out = np.zeros_like(z)
        for c in reversed(self.weights):
            out = out * z + c
        return out

    @property
    def mean(self):
        return float(np.dot(np.arange(len(self._w)), self._w))

    @property
    def factorial_moment2(self):
        j = np.arange(len(self._w))
        return float(np.dot(j * (j - 1), self._w))

    def _complement(self, s):
        out = np.zeros_like(s)
        with np.errstate(divide="ignore"):
            log1ms = np.log1p(-s)
        for j, c in enumerate(self.weights[1:], start=1):
            if c:
                out = out - c * np.expm1(j * log1ms)
        return out

    @cached_property
    def _cdf(self) -> np.ndarray:
        c = np.cumsum(self._w)
        c[-1] = 1.0
        return c

    @cached_property
    def alias_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Vose alias table ``(prob, alias)``."""
        n = len(self._w)
        scaled = self._w * n
        prob = np.ones(n)
        alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            lo, hi = small.pop(), large.pop()
            prob[lo] = scaled[lo]
            alias[lo] = hi
            scaled[hi] = scaled[hi] + scaled[lo] - 1.0
            (small if scaled[hi] < 1.0 else large).append(hi)
        return prob, alias

    def sample(self, rng, size=None):
        if len(self._w) > ALIAS_THRESHOLD:
            prob, alias = self.alias_table
            i = rng.integers(0, len(prob), size=size)
            u = rng.random(size=size)
            out = np.where(u < prob[i], i, alias[i])
        else:
            u = rng.random(size=size)
            out = np.minimum(np.searchsorted(self._cdf, u, side="right"), len(self._w) - 1)
        return int(out) if size is None else out.astype(np.int64)

    def sum_of(self, rng, counts):
        counts = np.asarray(counts, dtype=np.int64)
        if len(self._w) == 1:
            return np.zeros_like(counts)
        n = rng.multinomial(counts, self._w)
        return n @ np.arange(len(self._w), dtype=np.int64)

    def to_config(self):
        return {"type": "finite", "weights": list(self.weights)}


@dataclass(frozen=True)
class Geometric(Pgf):
    """Law ``P(n) = q p**n`` on n >= 0, generating function ``q / (1 - p z)``."""

    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"Geometric p must be in (0, 1), got {self.p!r}")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    def _eval(self, z):
        return self.q / (1.0 - self.p * z)

    @property
    def mean(self):
        return self.p / self.q

    @property
    def factorial_moment2(self):
        return 2.0 * self.p**2 / self.q**2

    def _complement(self, s):
        return self.p * s / (self.q + self.p * s)

    def sample(self, rng, size=None):
        # inversion: P(N >= n) = p**n
        u = 1.0 - rng.random(size=size)
        out = np.floor(np.log(u) / math.log(self.p))
        return int(out) if size is None else out.astype(np.int64)

    def sum_of(self, rng, counts):
        counts = np.asarray(counts, dtype=np.int64)
        draw = rng.negative_binomial(np.maximum(counts, 1), self.q)
        return np.where(counts > 0, draw, 0).astype(np.int64)

    def to_config(self):
        return {"type": "geometric", "p": self.p}


@dataclass(frozen=True)
class Poisson(Pgf):
    """Poisson law; ``rate`` is its mean."""

    rate: float

    def __post_init__(self):
        if not (self.rate >= 0.0 and math.isfinite(self.rate)):
            raise ValueError(f"Poisson mean must be finite and >= 0, got {self.rate!r}")

    def _eval(self, z):
        return np.exp(-self.rate * (1.0 - z))

    @property
    def mean(self):
        return self.rate

    @property
    def factorial_moment2(self):
        return self.rate**2

    def _complement(self, s):
        return -np.expm1(-self.rate * s)

    def sample(self, rng, size=None):
        out = rng.poisson(self.rate, size=size)
        return int(out) if size is None else out.astype(np.int64)

    def sum_of(self, rng, counts):
        counts = np.asarray(counts, dtype=np.int64)
        return rng.poisson(self.rate * counts).astype(np.int64)

    def to_config(self):
        return {"type": "poisson", "mean": self.rate}


@dataclass(frozen=True)
class PointMass(Pgf):
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ValueError(f"PointMass n must be a nonnegative integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    def _eval(self, z):
        return z**self.n

    @property
    def mean(self):
        return float(self.n)

    @property
    def factorial_moment2(self):
        return float(self.n * (self.n - 1))

    def _complement(self, s):
        if self.n == 0:
            return np.zeros_like(s)
        with np.errstate(divide="ignore"):
            return -np.expm1(self.n * np.log1p(-s))

    def sample(self, rng, size=None):
        return self.n if size is None else np.full(size, self.n, dtype=np.int64)

    def sum_of(self, rng, counts):
        return self.n * np.asarray(counts, dtype=np.int64)

    def to_config(self):
        return {"type": "point", "n": self.n}


@dataclass(frozen=True)
class Mixture(Pgf):
    """Convex combination ``sum w_i g_i``. Zero-weight components are dropped."""

    components: tuple[tuple[float, Pgf], ...]

    def __post_init__(self):
        comps = tuple((float(w), g) for w, g in self.components if w != 0.0)
        if not comps:
            raise ValueError("Mixture needs a component with positive weight")
        if any(w < 0 or not math.isfinite(w) for w, _ in comps):
            raise ValueError("Mixture weights must be nonnegative")
        total = math.fsum(w for w, _ in comps)
        if abs(total - 1.0) > TOL.pgf_normalization:
            raise ValueError(f"Mixture weights sum to {total!r}, not 1")
        object.__setattr__(self, "components", comps)

    @cached_property
    def _w(self) -> np.ndarray:
        w = np.array([w for w, _ in self.components])
        return w / w.sum()

    def _eval(self, z):
        return sum(w * g._eval(z) for w, g in self.components)

    @property
    def mean(self):
        return math.fsum(w * g.mean for w, g in self.components)

    @property
    def factorial_moment2(self):
        return math.fsum(w * g.factorial_moment2 for w, g in self.components)

    def _complement(self, s):
        return sum(w * g._complement(s) for w, g in self.components)

    def sample(self, rng, size=None):
        if size is None:
            i = int(rng.choice(len(self._w), p=self._w))
            return self.components[i][1].sample(rng)
        counts = rng.multinomial(1, self._w, size=size)
        return self.sum_of_counts(rng, counts.reshape(-1, len(self._w))).reshape(size)

    def sum_of(self, rng, counts):
        counts = np.asarray(counts, dtype=np.int64)
        per = rng.multinomial(counts, self._w)
        return self.sum_of_counts(rng, per.reshape(counts.shape + (len(self._w),)))

    def sum_of_counts(self, rng, per):
        total = np.zeros(per.shape[:-1], dtype=np.int64)
        for j, (_, g) in enumerate(self.components):
            total += g.sum_of(rng, per[..., j])
        return total

    def to_config(self):
        return {"type": "mixture", "components": [[w, g.to_config()] for w, g in self.components]}


def eval_pgf(pgf: Pgf, z):
    """Evaluate ``pgf`` at ``z`` in [0, 1]; raises DomainError outside."""
    return _scalar(pgf._eval(_check_unit(z)))


def pgf_mean(pgf: Pgf) -> float:
    return pgf.mean


def compose_iterate(pgf: Pgf, j: int, z, max_evals: int = TOL.max_pgf_evals):
    """The ``j``-fold composition ``g(g(...g(z)))``; ``j = 0`` returns ``z``."""
    if j < 0:
        raise DomainError("iteration order must be nonnegative")
    if j > max_evals:
        raise IterationCapError(f"{j} iterations exceeds the cap of {max_evals}")
    x = _check_unit(z).copy()
    for _ in range(j):
        x = pgf._eval(x)
    return _scalar(x)


def sample_offspring(pgf: Pgf, rng: np.random.Generator) -> int:
    return int(pgf.sample(rng))


def pgf_from_config(cfg) -> Pgf:
    """Build a Pgf from its config form; a bare list is FiniteSupport weights."""
    if isinstance(cfg, Pgf):
        return cfg
    if isinstance(cfg, (list, tuple)):
        return FiniteSupport(tuple(cfg))
    kind = cfg.get("type")
    keys = set(cfg) - {"type"}
    expected = {
        "finite": {"weights"},
        "geometric": {"p"},
        "poisson": {"mean"},
        "point": {"n"},
        "mixture": {"components"},
    }
    if kind not in expected:
        raise ValueError(f"unknown pgf type {kind!r}")
    if keys != expected[kind]:
        raise ValueError(f"pgf {kind!r} expects keys {sorted(expected[kind])}, got {sorted(keys)}")
    if kind == "finite":
        return FiniteSupport(tuple(cfg["weights"]))
    if kind == "geometric":
        return Geometric(float(cfg["p"]))
    if kind == "poisson":
        return Poisson(float(cfg["mean"]))
    if kind == "point":
        return PointMass(int(cfg["n"]))
    return Mixture(tuple((float(w), pgf_from_config(c)) for w, c in cfg["components"]))


BINARY = FiniteSupport((0.5, 0.0, 0.5))
