"""Downcrossing chains of Brownian motion with drift and their branching limits.

For ``X`` generated by ``alpha d^2/dx^2 + beta d/dx`` the number of
``1/k``-downcrossings at consecutive levels ``a + i/k`` forms a
Galton-Watson chain with geometric offspring. Rescaled by ``1/k`` it
converges to the local-time profile, a branching diffusion in the space
variable. Two routes are provided: chains sampled directly from their
offspring law, and an Euler-Maruyama simulation of ``X`` whose local time
is read off from downcrossing counts.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cbi import CbiLaw, laplace_transform
from .config import TOL
from .dbi import DbiProcess, sample_at_steps
from .errors import DomainError, TimeCapError
from .kernels import walk_chunk_for
from .mechanisms import BranchingMechanism, ImmigrationMechanism
from .pgf import Geometric
from .rng import RngSeed, map_blocks

# Broadie-Glasserman-Kou constant, -zeta(1/2)/sqrt(2*pi)
BGK = 0.5825971579390106


@dataclass(frozen=True)
class DriftedBm:
    alpha: float
    beta: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")

    @property
    def ratio(self) -> float:
        return self.beta / self.alpha

    def mirrored(self) -> "DriftedBm":
        return DriftedBm(self.alpha, -self.beta)


class Direction(enum.Enum):
    UPWARD = "up"
    DOWNWARD = "down"


def crossing_prob(bm: DriftedBm, delta: float, x: float) -> float:
    """``P_x(hit delta before -delta)`` for |x| <= delta.

    ``(e^{c delta} - e^{-c x}) / (e^{c delta} - e^{-c delta})`` with
    ``c = beta/alpha``; ``(delta + x) / (2 delta)`` when beta = 0.
    """
    if not delta > 0:
        raise DomainError("delta must be > 0")
    if abs(x) > delta:
        raise DomainError(f"x={x} outside [-{delta}, {delta}]")
    c = bm.ratio
    if c == 0:
        return (delta + x) / (2.0 * delta)
    # same ratio, rewritten with expm1 to stay accurate for small c*delta
    return math.exp(c * (delta - x)) * math.expm1(c * (delta + x)) / math.expm1(2.0 * c * delta)


def downcrossing_pgf(bm: DriftedBm, k: int) -> Geometric:
    """Law of the number of 1/k-downcrossings at 0 before hitting -1/k."""
    if k < 1:
        raise DomainError("k must be >= 1")
    return Geometric(crossing_prob(bm, 1.0 / k, 0.0))


def limit_mechanism(bm: DriftedBm):
    """``(R, F_up, F_down)`` with ``R(lam) = (beta/alpha) lam - lam^2``,
    ``F_up = 0`` and ``F_down(lam) = lam``."""
    R = BranchingMechanism(beta=bm.ratio, alpha=1.0)
    return R, ImmigrationMechanism(), ImmigrationMechanism(b=1.0)


def chain_process(bm: DriftedBm, k: int, direction: Direction) -> DbiProcess:
    """Offspring and immigration laws of the level-to-level chain.

    Downward the offspring parameter is ``1 - crossing_prob`` of the
    reflected motion ``-X``; algebraically this equals the upward one. The
    immigration law is the offspring law (one extra lineage per level).
    """
    if direction is Direction.UPWARD:
        return DbiProcess(downcrossing_pgf(bm, k))
    g = Geometric(1.0 - crossing_prob(bm.mirrored(), 1.0 / k, 0.0))
    return DbiProcess(g, g)


@dataclass(frozen=True)
class CrossingChain:
    direction: Direction
    k: int
    a: float
    u: float
    states: np.ndarray  # shape (n_levels, n_paths)
    censored: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))

    @property
    def delta(self) -> float:
        return 1.0 / self.k

    def at(self, t: float) -> np.ndarray:
        """``Z_k([k t]) / k`` for every replicate."""
        return self.states[int(math.floor(self.k * t + 1e-9))] / self.k


def simulate_crossing_chain(
    bm: DriftedBm,
    k: int,
    u: float,
    direction: Direction | str,
    t_max: float,
    seed: RngSeed | int,
    n_paths: int = 1,
    a: float | None = None,
    threads: int = 1,
    cap: int = TOL.population_cap,
) -> CrossingChain:
    """Level-indexed downcrossing chains started from ``round(k u)``."""
    direction = Direction(direction)
    if not u >= 0:
        raise DomainError("u must be >= 0")
    a = t_max if a is None else a
    if direction is Direction.DOWNWARD and t_max > a + 1e-12:
        raise DomainError("the downward chain only runs for t <= a")
    proc = chain_process(bm, k, direction)
    n = int(math.floor(k * t_max + 1e-9))
    z0 = int(round(k * u))
    states, cens = sample_at_steps(proc, z0, np.arange(n + 1), n_paths, seed, threads, cap)
    return CrossingChain(direction, k, a, u, states, cens)


def chain_law(bm: DriftedBm, u: float, direction: Direction | str) -> CbiLaw:
    R, f_up, f_down = limit_mechanism(bm)
    return CbiLaw(R, f_up if Direction(direction) is Direction.UPWARD else f_down, u)


# -- SDE route ---------------------------------------------------------------


@dataclass
class PathLocalTime:
    counts: np.ndarray  # downcrossing counts at levels a + i/k, i from i_lo
    occupation: np.ndarray  # Euler steps spent in [a + i/k, a + (i+1)/k)
    n_steps: int
    reached: bool


@dataclass(frozen=True)
class SdeReport:
    bm: DriftedBm
    k: int
    u: float
    a: float
    dt: float
    i_lo: int
    counts: np.ndarray  # (n_paths, n_levels)
    occupation: np.ndarray  # (n_paths, n_levels), in time units
    reached: np.ndarray
    n_steps: np.ndarray
    boxes: tuple[tuple[float, float], ...]
    x0: float = 0.0

    @property
    def n_censored(self) -> int:
        return int(np.sum(~self.reached))

    def level_index(self, x: float) -> int:
        return int(round((x - self.a) * self.k)) - self.i_lo

    def net_upcrossings(self) -> np.ndarray:
        """Upcrossings minus downcrossings of each band, fixed by the start and stop levels."""
        i = np.arange(self.counts.shape[1]) + self.i_lo
        j0 = int(round((self.x0 - self.a) * self.k))
        return ((j0 <= i) & (i < 0)).astype(float) - ((0 <= i) & (i < j0)).astype(float)

    def local_time(self, crossing_average: bool = False) -> np.ndarray:
        """``l(x)`` at every level: count / (2 alpha k).

        With ``crossing_average`` the count is the mean of up- and
        downcrossings of the band, which removes the half-crossing deficit
        on bands the path traverses on its way from ``x0`` to ``a``.
        """
        counts = self.counts + 0.5 * self.net_upcrossings() if crossing_average else self.counts
        return counts / (2.0 * self.bm.alpha * self.k)

    @property
    def z0(self) -> float:
        """Chain-normalised start ``Z_k(0) / k``: the count at ``a`` over ``k``, which is ``2 alpha u``."""
        return 2.0 * self.bm.alpha * self.u

    def xi(self, t: float) -> np.ndarray:
        """Chain-normalised ``Z_k([k t]) / k`` above ``a`` for completed paths.

        Compare with the profile mean started from :attr:`z0`, not ``u``.
        """
        return self.counts[self.reached, self.level_index(self.a + math.floor(self.k * t + 1e-9) / self.k)] / self.k

    def eta(self, t: float) -> np.ndarray:
        """Chain-normalised count ``[k t]`` levels below ``a``.

        The path stops on a downcrossing of ``a`` itself, so the first band
        below ``a`` carries no immigrant lineage; see :func:`eta_mean_k`.
        """
        return self.counts[self.reached, self.level_index(self.a - math.floor(self.k * t + 1e-9) / self.k)] / self.k

    def occupation_check(self, lo: float, hi: float):
        """Per-path ``(2 int_B l dx, time in B)`` for the box [lo, hi] on the level grid."""
        i0, i1 = self.level_index(lo), self.level_index(hi)
        lt = self.local_time(crossing_average=True)[:, i0:i1 + 1]
        delta = 1.0 / self.k
        integral = 2.0 * delta * (lt[:, 1:] + lt[:, :-1]).sum(axis=1) / 2.0
        occ = self.occupation[:, i0:i1].sum(axis=1)
        return integral[self.reached], occ[self.reached]

    def box_errors(self):
        """``(box, aggregate relative error, per-path relative errors)`` per box."""
        out = []
        for lo, hi in self.boxes:
            lt, occ = self.occupation_check(lo, hi)
            agg = abs(lt.sum() - occ.sum()) / occ.sum()
            with np.errstate(divide="ignore", invalid="ignore"):
                per = np.abs(lt - occ) / occ
            out.append(((lo, hi), float(agg), per))
        return out


def _walk_path(bm, k, u, a, x0, dt, i_lo, n_levels, max_steps, rng, backend, chunk=1 << 16):
    walk = walk_chunk_for(backend)
    delta = 1.0 / k
    sd = math.sqrt(2.0 * bm.alpha * dt)
    corr = BGK * sd
    target = int(round(2.0 * bm.alpha * k * u))
    counts = np.zeros(n_levels, dtype=np.int64)
    occ = np.zeros(n_levels, dtype=np.int64)
    if target == 0:
        return PathLocalTime(counts, occ, 0, True)
    x = float(x0)
    j = int(round((x0 - a) * k))
    n = 0
    while True:
        z = rng.standard_normal(chunk)
        x, j, n, used, status = walk(z, x, j, n, counts, occ, a, delta, bm.beta * dt, sd, corr,
                                     i_lo, target, max_steps)
        if status:
            return PathLocalTime(counts, occ, n, status == 1)


def sde_cross_validate(
    bm: DriftedBm,
    k: int,
    u: float,
    a: float,
    n_paths: int,
    seed: RngSeed | int,
    t_max: float = 1.0,
    x0: float = 0.0,
    time_cap: float = 1e4,
    dt_factor: float = 0.1,
    boxes=None,
    threads: int = 1,
    backend: str | None = None,
    strict: bool = False,
) -> SdeReport:
    """Simulate ``dX = beta dt + sqrt(2 alpha) dW`` from ``x0`` until the
    downcrossing count at ``a`` reaches ``round(2 alpha k u)``.

    The step is ``dt = dt_factor * (1/k)^2 / (2 alpha)``. Downcrossings are
    counted on the grid ``a + i/k`` by tracking the last grid level the
    path has touched; thresholds are shifted by ``BGK * sqrt(2 alpha dt)``
    to offset the discrete monitoring. Paths that exceed ``time_cap`` are
    reported as censored (or raise TimeCapError if ``strict``).
    """
    seed = seed if isinstance(seed, RngSeed) else RngSeed(int(seed))
    dt = dt_factor * (1.0 / k) ** 2 / (2.0 * bm.alpha)
    max_steps = int(math.ceil(time_cap / dt))
    below = int(math.ceil(max(a - min(x0, a - 1.0), 1.0))) + 1
    i_lo = -k * below
    i_hi = k * (int(math.ceil(t_max)) + 2)
    n_levels = i_hi - i_lo + 1
    if boxes is None:
        boxes = ((a - 0.5, a + 0.5), (a, a + 1.0), (a - 1.0, a))

    def run(block, size):
        out = []
        for p in range(size):
            rng = seed.substream(block).substream(p).generator()
            out.append(_walk_path(bm, k, u, a, x0, dt, i_lo, n_levels, max_steps, rng, backend))
        return out

    paths = [p for part in map_blocks(run, n_paths, threads, block_size=64) for p in part]
    reached = np.array([p.reached for p in paths])
    if strict and not reached.all():
        raise TimeCapError(f"{int((~reached).sum())} paths hit the time cap {time_cap}")
    return SdeReport(
        bm, k, u, a, dt, i_lo,
        np.array([p.counts for p in paths]),
        np.array([p.occupation for p in paths]) * dt,
        reached,
        np.array([p.n_steps for p in paths]),
        tuple(tuple(map(float, b)) for b in boxes),
        float(x0),
    )


def cb_mean(bm: DriftedBm, u: float, t: float, direction: Direction | str) -> float:
    """Mean of the limiting profile: ``u e^{ct}`` plus ``(e^{ct}-1)/c`` downward."""
    c = bm.ratio
    growth = t if c == 0 else math.expm1(c * t) / c
    extra = growth if Direction(direction) is Direction.DOWNWARD else 0.0
    return u * math.exp(c * t) + extra


def eta_mean_k(rep: SdeReport, t: float) -> float:
    """Finite-``k`` mean of :meth:`SdeReport.eta`: the limit minus one missing lineage.

    Exact for ``beta = 0``; first order in ``1/k`` otherwise.
    """
    n = math.floor(rep.k * t + 1e-9)
    missing = math.exp(rep.bm.ratio * (n - 1) / rep.k) / rep.k if n else 0.0
    return cb_mean(rep.bm, rep.z0, n / rep.k, "down") - missing


def write_laplace_rows(path, rows) -> None:
    """CSV with ``t, empirical_laplace, theoretical_laplace, ci_low, ci_high``."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "lambda", "empirical_laplace", "theoretical_laplace", "ci_low", "ci_high"])
        w.writerows(rows)


def laplace_rows(values_at, law: CbiLaw, ts, lams, z_crit: float = TOL.z_crit):
    """Empirical vs theoretical Laplace transforms of ``values_at(t)``."""
    rows = []
    for t in ts:
        v = values_at(t)
        for lam in lams:
            e = np.exp(-lam * v)
            m = float(e.mean())
            se = float(e.std(ddof=1) / math.sqrt(len(e))) if len(e) > 1 else 0.0
            rows.append((float(t), float(lam), m, laplace_transform(law, t, lam),
                         m - z_crit * se, m + z_crit * se))
    return rows
