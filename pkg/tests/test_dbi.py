import math

import numpy as np
import pytest

from branchlim.dbi import (
    DbiPath,
    DbiProcess,
    mean_after_n,
    sample_at_steps,
    simulate_path,
    simulate_paths,
    step,
    step_many,
    transition_pgf,
)
from branchlim.errors import DomainError, PopulationCapError
from branchlim.pgf import BINARY, Geometric, PointMass, Poisson, compose_iterate
from branchlim.rng import RngSeed


def _ci_ok(samples, target, z=3.0):
    se = samples.std(ddof=1) / math.sqrt(len(samples))
    return abs(samples.mean() - target) <= z * se + 1e-12


class TestTransitionPgf:
    def test_no_parents_no_immigration(self):
        proc = DbiProcess(Geometric(0.3), PointMass(0))
        assert all(transition_pgf(proc, 0, z) == 1.0 for z in (0.0, 0.4, 1.0))

    def test_no_parents(self):
        proc = DbiProcess(BINARY, Poisson(2.0))
        assert transition_pgf(proc, 0, 0.3) == pytest.approx(Poisson(2.0)(0.3))

    def test_hand_value(self):
        assert transition_pgf(DbiProcess(BINARY, PointMass(1)), 2, 0.5) == pytest.approx(0.1953125)

    def test_domain(self):
        with pytest.raises(DomainError):
            transition_pgf(DbiProcess(BINARY), 1, 1.5)

    @pytest.mark.parametrize("i", [0, 3, 20])
    @pytest.mark.parametrize("z", [0.3, 0.7])
    def test_empirical(self, i, z, rng):
        proc = DbiProcess(Geometric(0.4), Poisson(1.5))
        y = step_many(proc, np.full(100_000, i), rng)
        e = z ** y.astype(float)
        assert abs(e.mean() - transition_pgf(proc, i, z)) <= 4 * e.std() / math.sqrt(len(e)) + 1e-12


class TestStep:
    def test_deterministic(self, rng):
        assert step(DbiProcess(PointMass(1), PointMass(1)), 5, rng) == 6
        assert step(DbiProcess(PointMass(0), PointMass(0)), 7, rng) == 0

    def test_binary_mean(self, rng):
        y = step_many(DbiProcess(BINARY, PointMass(1)), np.full(100_000, 100), rng)
        assert abs(y.mean() - 101) <= 0.1
        assert _ci_ok(y.astype(float), 101.0)

    @pytest.mark.parametrize("z", [0.5, 0.9])
    def test_branching_property(self, z, rng):
        proc = DbiProcess(Geometric(0.45), Poisson(0.8))
        n = 100_000
        whole = step_many(proc, np.full(n, 9), rng)
        part = step_many(proc, np.full(n, 4), rng) + step_many(
            proc.with_immigration(PointMass(0)), np.full(n, 5), rng)
        ew, ep = z ** whole.astype(float), z ** part.astype(float)
        se = math.sqrt(ew.var() / n + ep.var() / n)
        assert abs(ew.mean() - ep.mean()) <= 4 * se


class TestPaths:
    def test_zero_steps(self):
        assert list(simulate_path(DbiProcess(BINARY), 4, 0, 1).states) == [4]

    def test_linear_growth(self):
        path = simulate_path(DbiProcess(PointMass(1), PointMass(1)), 0, 4, 1)
        assert list(path.states) == [0, 1, 2, 3, 4]

    def test_reproducible(self):
        proc = DbiProcess(Geometric(0.5), Poisson(1.0))
        a = simulate_path(proc, 10, 50, RngSeed(3, 2))
        b = simulate_path(proc, 10, 50, RngSeed(3, 2))
        np.testing.assert_array_equal(a.states, b.states)

    def test_extinction_probability(self):
        n, paths = 50, 100_000
        vals, _ = sample_at_steps(DbiProcess(BINARY), 1, [n], paths, 11)
        p = compose_iterate(BINARY, n, 0.0)
        dead = (vals[0] == 0).astype(float)
        assert abs(dead.mean() - p) <= 3 * math.sqrt(p * (1 - p) / paths)

    def test_population_cap(self):
        proc = DbiProcess(PointMass(2))
        with pytest.raises(PopulationCapError) as info:
            simulate_path(proc, 1, 40, 0, cap=1000)
        assert info.value.states[-1] > 1000 >= info.value.states[-2]
        _, cens = simulate_paths(proc, 1, 40, np.random.default_rng(0), n_paths=3, cap=1000)
        assert cens.all()

    def test_scaled_view_and_csv(self, tmp_path):
        path = DbiPath(np.array([0, 2, 4]), k=2)
        np.testing.assert_allclose(path.scaled, [0, 1, 2])
        path.to_csv(tmp_path / "p.csv")
        assert (tmp_path / "p.csv").read_text().splitlines() == ["step,state", "0,0", "1,2", "2,4"]
        with pytest.raises(ValueError):
            DbiPath(np.array([1, -1]))

    def test_thread_count_does_not_change_samples(self):
        proc = DbiProcess(Geometric(0.5), Poisson(1.0))
        a = sample_at_steps(proc, 20, [5, 10], 10_000, RngSeed(9), threads=1)
        b = sample_at_steps(proc, 20, [5, 10], 10_000, RngSeed(9), threads=8)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])


class TestMean:
    def test_unit_drift(self):
        assert mean_after_n(DbiProcess(BINARY, PointMass(1)), 0, 10) == 10

    def test_growth(self):
        assert mean_after_n(DbiProcess(PointMass(2)), 3, 2) == 12

    def test_monte_carlo(self):
        proc = DbiProcess(Geometric(0.5), PointMass(1))
        assert mean_after_n(proc, 5, 3) == 8
        vals, _ = sample_at_steps(proc, 5, [3], 100_000, 5)
        assert _ci_ok(vals[0].astype(float), 8.0)
