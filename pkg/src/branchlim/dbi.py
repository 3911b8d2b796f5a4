"""Galton-Watson chains with immigration on the integers.

One step from state ``y`` is the sum of ``y`` i.i.d. offspring counts drawn
from ``g`` plus one immigration count drawn from ``h``; its generating
function is ``g(z)**y * h(z)``.

Path batches are simulated column-wise: all replicates advance one step at
a time, each step drawing every replicate's offspring total in one
vectorised call. Offspring are drawn before immigrants in every step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import TOL
from .errors import PopulationCapError
from .pgf import Pgf, PointMass, _check_unit
from .rng import RngSeed, make_rng, map_blocks


@dataclass(frozen=True)
class DbiProcess:
    offspring: Pgf
    immigration: Pgf = PointMass(0)

    def with_immigration(self, h: Pgf) -> "DbiProcess":
        return DbiProcess(self.offspring, h)


@dataclass(frozen=True)
class DbiPath:
    states: np.ndarray
    k: int = 1
    seed: RngSeed | None = None
    censored: bool = False

    def __post_init__(self):
        if len(self.states) == 0:
            raise ValueError("a path holds at least its initial state")
        if np.any(np.asarray(self.states) < 0):
            raise ValueError("states must be nonnegative")

    @property
    def scaled(self) -> np.ndarray:
        """The path viewed on the lattice {0, 1/k, 2/k, ...}."""
        return np.asarray(self.states) / self.k

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "state"])
            for i, y in enumerate(self.states):
                w.writerow([i, int(y)])


def transition_pgf(proc: DbiProcess, i: int, z):
    """``g(z)**i * h(z)``, the generating function of one step from ``i``."""
    z = _check_unit(z)
    out = proc.offspring._eval(z) ** i * proc.immigration._eval(z)
    return float(out) if np.ndim(out) == 0 else out


def step_many(proc: DbiProcess, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    nxt = proc.offspring.sum_of(rng, y)
    return nxt + proc.immigration.sum_of(rng, np.ones_like(y))


def step(proc: DbiProcess, y: int, rng) -> int:
    rng = make_rng(rng)
    return int(step_many(proc, np.array([y]), rng)[0])


def simulate_paths(
    proc: DbiProcess,
    y0,
    n_steps: int,
    rng: np.random.Generator,
    n_paths: int | None = None,
    cap: int = TOL.population_cap,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate a batch of chains.

    Returns ``(states, censored)`` where ``states`` has shape
    ``(n_steps + 1, n_paths)``. A replicate whose population exceeds ``cap``
    is frozen at its last value and flagged in ``censored``.
    """
    y = np.broadcast_to(np.asarray(y0, dtype=np.int64), (n_paths,) if n_paths else np.shape(y0)).copy()
    out = np.empty((n_steps + 1,) + y.shape, dtype=np.int64)
    out[0] = y
    censored = y > cap
    for n in range(1, n_steps + 1):
        live = ~censored
        if live.all():
            y = step_many(proc, y, rng)
        else:
            y = y.copy()
            y[live] = step_many(proc, y[live], rng)
        censored |= y > cap
        out[n] = y
    return out, censored


def simulate_path(
    proc: DbiProcess,
    y0: int,
    n_steps: int,
    seed: RngSeed | int,
    k: int = 1,
    cap: int = TOL.population_cap,
) -> DbiPath:
    """One reproducible path of length ``n_steps + 1`` started at ``y0``.

    Raises PopulationCapError (carrying the truncated path) if the
    population exceeds ``cap``.
    """
    seed = seed if isinstance(seed, RngSeed) else RngSeed(int(seed))
    rng = seed.generator()
    states = [int(y0)]
    y = int(y0)
    for _ in range(n_steps):
        y = int(step_many(proc, np.array([y]), rng)[0])
        states.append(y)
        if y > cap:
            raise PopulationCapError(
                f"population {y} exceeded cap {cap} at step {len(states) - 1}",
                states=np.array(states, dtype=np.int64),
            )
    return DbiPath(np.array(states, dtype=np.int64), k=k, seed=seed)


def sample_at_steps(
    proc: DbiProcess,
    y0: int,
    steps,
    n_paths: int,
    seed: RngSeed | int,
    threads: int = 1,
    cap: int = TOL.population_cap,
) -> tuple[np.ndarray, np.ndarray]:
    """States at the requested step indices for ``n_paths`` replicates.

    Returns ``(values, censored)`` with ``values`` of shape
    ``(len(steps), n_paths)``. Blocks of replicates use substreams of
    ``seed`` indexed by block number, so the output does not depend on
    ``threads``.
    """
    seed = seed if isinstance(seed, RngSeed) else RngSeed(int(seed))
    steps = np.asarray(steps, dtype=np.int64)
    n_max = int(steps.max()) if steps.size else 0

    def run(block, size):
        rng = seed.substream(block).generator()
        states, cens = simulate_paths(proc, y0, n_max, rng, n_paths=size, cap=cap)
        return states[steps], cens

    parts = map_blocks(run, n_paths, threads)
    vals = np.concatenate([p[0] for p in parts], axis=1)
    cens = np.concatenate([p[1] for p in parts])
    return vals, cens


def mean_after_n(proc: DbiProcess, y0: float, n: int) -> float:
    """``m**n y0 + h'(1) * sum_{j<n} m**j`` with ``m = g'(1)``."""
    m = proc.offspring.mean
    drift = proc.immigration.mean
    geo = float(n) if m == 1.0 else (m**n - 1.0) / (m - 1.0)
    return m**n * y0 + drift * geo
