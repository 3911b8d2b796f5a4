import math

import numpy as np
import pytest

from branchlim.cbi import laplace_transform
from branchlim.errors import DomainError, TimeCapError
from branchlim.kernels import available_backends, walk_chunk_for
from branchlim.rayknight import (
    BGK,
    Direction,
    DriftedBm,
    cb_mean,
    chain_law,
    chain_process,
    crossing_prob,
    downcrossing_pgf,
    eta_mean_k,
    laplace_rows,
    limit_mechanism,
    sde_cross_validate,
    simulate_crossing_chain,
    write_laplace_rows,
)
from branchlim.rng import RngSeed
from branchlim.scaling import ScalingScheme, compute_Fk, compute_Rk

BM0 = DriftedBm(0.5, 0.0)
BM1 = DriftedBm(0.5, 0.5)


class TestCrossingProb:
    def test_boundaries(self):
        assert crossing_prob(BM1, 0.1, 0.1) == pytest.approx(1.0)
        assert crossing_prob(BM1, 0.1, -0.1) == pytest.approx(0.0, abs=1e-15)

    def test_value(self):
        expected = (math.exp(0.1) - 1) / (math.exp(0.1) - math.exp(-0.1))
        assert crossing_prob(BM1, 0.1, 0.0) == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(0.524979, abs=1e-6)

    def test_driftless(self):
        assert crossing_prob(BM0, 0.2, 0.05) == pytest.approx(0.625)

    def test_small_drift_is_continuous(self):
        assert crossing_prob(DriftedBm(0.5, 1e-12), 0.1, 0.03) == pytest.approx(0.65, abs=1e-9)

    def test_domain(self):
        with pytest.raises(DomainError):
            crossing_prob(BM1, 0.1, 0.2)
        with pytest.raises(ValueError):
            DriftedBm(0.0)

    def test_first_passage_monte_carlo(self):
        # Euler paths from 0 with barriers shifted outward for discrete monitoring
        rng = np.random.default_rng(2024)
        delta, n = 0.1, 40_000
        dt = 1e-6
        sd = math.sqrt(2 * BM1.alpha * dt)
        shift = BGK * sd
        x = np.zeros(n)
        alive = np.ones(n, bool)
        up = np.zeros(n, bool)
        while alive.any():
            idx = np.flatnonzero(alive)
            x[idx] += BM1.beta * dt + sd * rng.standard_normal(idx.size)
            hit_up = x[idx] >= delta + shift
            hit_dn = x[idx] <= -delta - shift
            up[idx[hit_up]] = True
            alive[idx[hit_up | hit_dn]] = False
        p = crossing_prob(BM1, delta, 0.0)
        assert abs(up.mean() - p) <= 3 * math.sqrt(p * (1 - p) / n)


class TestChains:
    def test_driftless_is_critical(self):
        assert downcrossing_pgf(BM0, 17).p == 0.5

    def test_drift_k10(self):
        assert downcrossing_pgf(BM1, 10).p == pytest.approx(0.524979, abs=1e-6)

    def test_mean_expansion(self):
        assert abs(downcrossing_pgf(BM1, 1000).mean - (1 + 1 / 1000)) <= 1e-4

    def test_limit_mechanisms(self):
        R, f_up, f_down = limit_mechanism(BM0)
        assert R(2.0) == -4.0 and f_up.is_zero and f_down(3.0) == 3.0
        R, _, _ = limit_mechanism(BM1)
        assert R(0.5) == pytest.approx(0.25)

    def test_rk_consistency(self):
        lam = np.linspace(0, 4, 17)
        R, _, _ = limit_mechanism(BM1)
        errs = []
        for k in (100, 1000, 10000):
            g = downcrossing_pgf(BM1, k)
            errs.append(np.max(np.abs(compute_Rk(g, ScalingScheme(k), lam) - R(lam))))
        assert errs[0] > errs[1] > errs[2]
        assert abs(compute_Rk(downcrossing_pgf(BM1, 1000), ScalingScheme(1000), 1.0)) <= 0.01

    def test_downward_immigration_limit(self):
        proc = chain_process(BM1, 5000, Direction.DOWNWARD)
        assert compute_Fk(proc.immigration, ScalingScheme(5000), 1.5) == pytest.approx(1.5, abs=1e-3)

    def test_zero_budget(self):
        chain = simulate_crossing_chain(BM0, 100, 0.004, Direction.UPWARD, 1.0, 1, n_paths=5)
        assert np.all(chain.states == 0)

    def test_downward_horizon(self):
        with pytest.raises(DomainError):
            simulate_crossing_chain(BM0, 10, 1.0, "down", 2.0, 1, a=1.0)

    def test_critical_mean_conservation(self):
        chain = simulate_crossing_chain(BM0, 100, 1.0, Direction.UPWARD, 1.0, RngSeed(4), n_paths=10_000)
        for t in (0.25, 0.5, 1.0):
            v = chain.at(t)
            assert abs(v.mean() - 1.0) <= 3 * v.std(ddof=1) / math.sqrt(len(v))

    @pytest.mark.parametrize("direction", ["up", "down"])
    def test_marginal_laplace(self, direction, tmp_path):
        chain = simulate_crossing_chain(BM0, 100, 1.0, direction, 1.0, RngSeed(8), n_paths=40_000)
        law = chain_law(BM0, 1.0, direction)
        rows = laplace_rows(chain.at, law, [0.5, 1.0], [0.5, 1.0, 2.0])
        for t, lam, emp, theo, lo, hi in rows:
            assert lo - 0.01 <= theo <= hi + 0.01
        write_laplace_rows(tmp_path / "l.csv", rows)
        assert (tmp_path / "l.csv").read_text().startswith("t,lambda,empirical_laplace")

    def test_fixed_point_case(self):
        bm = DriftedBm(0.5, 0.5)
        law = chain_law(bm, 1.0, "up")
        for t in (0.5, 1.0, 2.0):
            assert laplace_transform(law, t, 1.0) == pytest.approx(math.exp(-1.0), abs=1e-10)

    def test_cb_mean(self):
        assert cb_mean(BM0, 1.0, 0.7, "up") == 1.0
        assert cb_mean(BM0, 1.0, 0.7, "down") == pytest.approx(1.7)


def _chunk_inputs(seed=5):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(5000)


class TestKernels:
    @pytest.mark.skipif(len(available_backends()) < 2, reason="compiled kernel not built")
    def test_backends_agree_on_chunk(self):
        k, a, alpha = 10, 0.3, 0.5
        dt = 0.1 / k**2 / (2 * alpha)
        sd = math.sqrt(2 * alpha * dt)
        outs = []
        for backend in ("cython", "python"):
            counts = np.zeros(200, np.int64)
            occ = np.zeros(200, np.int64)
            res = walk_chunk_for(backend)(_chunk_inputs(), 0.0, -3, 0, counts, occ, a, 1 / k, 0.2 * dt,
                                          sd, BGK * sd, -100, 10**6, 10**9)
            outs.append((res, counts, occ))
        (r1, c1, o1), (r2, c2, o2) = outs
        assert r1 == r2
        np.testing.assert_array_equal(c1, c2)
        np.testing.assert_array_equal(o1, o2)

    @pytest.mark.skipif(len(available_backends()) < 2, reason="compiled kernel not built")
    def test_backends_agree_end_to_end(self):
        kw = dict(k=5, u=0.4, a=0.4, n_paths=4, seed=RngSeed(3), time_cap=200.0)
        a = sde_cross_validate(BM0, backend="cython", **kw)
        b = sde_cross_validate(BM0, backend="python", **kw)
        np.testing.assert_array_equal(a.counts, b.counts)
        np.testing.assert_array_equal(a.occupation, b.occupation)
        np.testing.assert_array_equal(a.n_steps, b.n_steps)

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            walk_chunk_for("fortran")


class TestSde:
    def test_zero_budget(self):
        rep = sde_cross_validate(BM0, 10, 0.0, 1.0, 3, 1)
        assert np.all(rep.xi(0.5) == 0) and rep.n_censored == 0

    def test_time_cap(self):
        with pytest.raises(TimeCapError):
            sde_cross_validate(BM0, 10, 1.0, 1.0, 2, 1, time_cap=0.01, strict=True)
        rep = sde_cross_validate(BM0, 10, 1.0, 1.0, 2, 1, time_cap=0.01)
        assert rep.n_censored == 2

    def test_budget_reached_exactly(self):
        rep = sde_cross_validate(BM0, 10, 0.5, 0.5, 6, RngSeed(2), time_cap=1e4)
        at_a = rep.counts[rep.reached, rep.level_index(rep.a)]
        assert np.all(at_a == round(2 * BM0.alpha * 10 * 0.5))

    def test_chain_start_uses_local_time_units(self):
        bm = DriftedBm(1.0, 0.0)
        rep = sde_cross_validate(bm, 10, 0.5, 0.5, 4, RngSeed(2), time_cap=1e4)
        assert rep.z0 == pytest.approx(1.0)
        np.testing.assert_allclose(rep.xi(0.0), rep.z0)

    def test_eta_mean_k_missing_lineage(self):
        rep = sde_cross_validate(BM0, 10, 0.5, 0.5, 1, RngSeed(2), time_cap=1e4)
        assert eta_mean_k(rep, 1.0) == pytest.approx(rep.z0 + 1.0 - 0.1)
        assert eta_mean_k(rep, 0.0) == pytest.approx(rep.z0)

    def test_local_time_monotone_in_budget(self):
        # more budget, same seed: every count is at least as large (path prefix property)
        small = sde_cross_validate(BM0, 8, 0.25, 0.5, 5, RngSeed(6))
        large = sde_cross_validate(BM0, 8, 0.75, 0.5, 5, RngSeed(6))
        ok = small.reached & large.reached
        assert np.all(large.counts[ok] >= small.counts[ok])

    def test_threads_do_not_change_result(self):
        kw = dict(k=6, u=0.3, a=0.5, n_paths=70, seed=RngSeed(11), time_cap=500.0)
        a = sde_cross_validate(BM0, threads=1, **kw)
        b = sde_cross_validate(BM0, threads=4, **kw)
        np.testing.assert_array_equal(a.counts, b.counts)
        np.testing.assert_array_equal(a.occupation, b.occupation)


def test_env_var_forces_python_fallback():
    import os
    import subprocess
    import sys
    env = {**os.environ, "BRANCHLIM_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", "import branchlim; print(branchlim.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
