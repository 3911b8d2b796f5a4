"""Experiment configs, Monte Carlo campaigns and convergence reports.

A campaign compares empirical Laplace transforms of rescaled chains with the
continuous-state law at each ``(k, t, lam)`` and flags a point as passing
when ``|empirical - theoretical| <= z_crit * SE + abs_tol``. Only
finite-dimensional marginals (single times and pairs of times) are checked;
path-space convergence has no finite test.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .cbi import CbiLaw, joint_laplace, laplace_transform, solve_psi
from .config import TOL
from .dbi import DbiProcess, mean_after_n, sample_at_steps, simulate_path
from .errors import InfeasibleAtThisK
from .kernels import BACKEND
from .mechanisms import BranchingMechanism, ImmigrationMechanism
from .pgf import pgf_from_config
from .rayknight import (
    Direction,
    DriftedBm,
    cb_mean,
    eta_mean_k,
    chain_law,
    chain_process,
    sde_cross_validate,
    simulate_crossing_chain,
)
from .rng import RngSeed
from .scaling import (
    ScalingScheme,
    composition_functionals,
    compute_Fk,
    compute_Rk,
    embed,
    generator_actions,
    lemma22_rows,
)

SCHEMA_VERSION = 1
KINDS = (
    "dbi-simulate",
    "psi-solve",
    "embed",
    "limit-verify",
    "rayknight-verify",
    "lemma22-table",
    "generator-table",
)
SCOPE_NOTE = (
    "checks finite-dimensional Laplace functionals only; "
    "path-space (Skorokhod) convergence is not tested"
)

_TOP_KEYS = {
    "schema_version", "kind", "seed", "n_paths", "branching", "immigration",
    "offspring", "immigration_pgf", "scheme", "grid", "tolerances", "dbi",
    "rayknight", "psi",
}
_NESTED_KEYS = {
    "scheme": {"k", "gamma_scale"},
    "grid": {"t", "lambda", "x", "x_grid", "joint"},
    "tolerances": {"z_crit", "abs_tol", "ode"},
    "dbi": {"y0", "n_steps", "export_paths"},
    "rayknight": {"alpha", "beta", "u", "a", "directions", "sde"},
    "psi": {"t_max", "lambda", "t"},
}
_SDE_KEYS = {"k", "n_paths", "time_cap", "x0", "dt_factor", "t"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int = 0
    n_paths: int = 10_000
    branching: BranchingMechanism = field(default_factory=BranchingMechanism)
    immigration: ImmigrationMechanism = field(default_factory=ImmigrationMechanism)
    offspring_pgf: object = None
    immigration_pgf: object = None
    k_list: tuple[int, ...] = (100,)
    gamma_scale: float | None = None
    t_grid: tuple[float, ...] = (1.0,)
    lam_grid: tuple[float, ...] = (1.0,)
    x: float = 1.0
    x_grid: tuple[float, ...] = tuple(i / 2 for i in range(11))
    joint: tuple[tuple[float, float, float, float], ...] = ()
    z_crit: float = TOL.z_crit
    abs_tol: float = TOL.abs_slack
    ode_tol: float = TOL.ode
    dbi: dict = field(default_factory=dict)
    rayknight: dict = field(default_factory=dict)
    psi: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if not self.t_grid or not self.lam_grid:
            raise ConfigError("evaluation grids must be nonempty")
        if any(b <= a for a, b in zip(self.k_list, self.k_list[1:])) or not self.k_list:
            raise ConfigError("k list must be nonempty and strictly increasing")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if d.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {d.get('schema_version')!r}")
        for key, allowed in _NESTED_KEYS.items():
            bad = set(d.get(key) or {}) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
        sde = (d.get("rayknight") or {}).get("sde") or {}
        if set(sde) - _SDE_KEYS:
            raise ConfigError(f"unknown keys in 'rayknight.sde': {sorted(set(sde) - _SDE_KEYS)}")
        if "kind" not in d:
            raise ConfigError("config needs a 'kind'")
        scheme = d.get("scheme") or {}
        grid = d.get("grid") or {}
        tol = d.get("tolerances") or {}
        kw = {}
        if "x_grid" in grid:
            kw["x_grid"] = tuple(map(float, grid["x_grid"]))
        try:
            return cls(
                kind=d["kind"],
                seed=int(d.get("seed", 0)),
                n_paths=int(d.get("n_paths", 10_000)),
                branching=BranchingMechanism.from_config(d.get("branching") or {}),
                immigration=ImmigrationMechanism.from_config(d.get("immigration") or {}),
                offspring_pgf=pgf_from_config(d["offspring"]) if d.get("offspring") else None,
                immigration_pgf=pgf_from_config(d["immigration_pgf"]) if d.get("immigration_pgf") else None,
                k_list=tuple(int(k) for k in scheme.get("k", [100])),
                gamma_scale=scheme.get("gamma_scale"),
                t_grid=tuple(map(float, grid.get("t", [1.0]))),
                lam_grid=tuple(map(float, grid.get("lambda", [1.0]))),
                x=float(grid.get("x", 1.0)),
                joint=tuple(tuple(map(float, j)) for j in grid.get("joint", [])),
                z_crit=float(tol.get("z_crit", TOL.z_crit)),
                abs_tol=float(tol.get("abs_tol", TOL.abs_slack)),
                ode_tol=float(tol.get("ode", TOL.ode)),
                dbi=dict(d.get("dbi") or {}),
                rayknight=dict(d.get("rayknight") or {}),
                psi=dict(d.get("psi") or {}),
                **kw,
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class ReportRow:
    kind: str
    k: int
    t: float
    lam: float
    empirical: float
    se: float
    theoretical: float
    exact_k: float
    n: int
    t2: float = math.nan
    lam2: float = math.nan

    @property
    def z(self) -> float:
        diff = self.empirical - self.theoretical
        if self.se == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.se

    def passed(self, z_crit: float, abs_tol: float) -> bool:
        return abs(self.empirical - self.theoretical) <= z_crit * self.se + abs_tol


@dataclass
class ConvergenceReport:
    name: str
    rows: list[ReportRow]
    z_crit: float
    abs_tol: float
    seed: int
    notes: list[str] = field(default_factory=list)
    censored: int = 0
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    CSV_HEADER = ("kind", "k", "t", "lambda", "t2", "lambda2", "empirical", "se", "theoretical",
                  "exact_k", "z", "pass", "n")

    @property
    def passed(self) -> bool:
        return all(r.passed(self.z_crit, self.abs_tol) for r in self.rows) and not self.extra.get("failed")

    def csv_rows(self):
        for r in self.rows:
            yield (r.kind, r.k, f"{r.t:.6g}", f"{r.lam:.6g}", f"{r.t2:.6g}", f"{r.lam2:.6g}",
                   f"{r.empirical:.10f}", f"{r.se:.10f}",
                   f"{r.theoretical:.10f}", f"{r.exact_k:.10f}", f"{r.z:.4f}",
                   int(r.passed(self.z_crit, self.abs_tol)), r.n)

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.CSV_HEADER)
            w.writerows(self.csv_rows())

    def summary(self) -> str:
        lines = [
            f"{self.name}: {'PASS' if self.passed else 'FAIL'} "
            f"(seed={self.seed}, threshold {self.z_crit:g}*SE + {self.abs_tol:g})",
            f"{'kind':<8} {'k':>6} {'t':>11} {'lambda':>11} {'empirical':>10} {'SE':>9} "
            f"{'theory':>10} {'exact_k':>10} {'z':>7}  ok",
        ]
        for r in self.rows:
            t = f"{r.t:.3g}" if math.isnan(r.t2) else f"{r.t:.3g},{r.t2:.3g}"
            lam = f"{r.lam:.3g}" if math.isnan(r.lam2) else f"{r.lam:.3g},{r.lam2:.3g}"
            lines.append(
                f"{r.kind:<8} {r.k:>6} {t:>11} {lam:>11} {r.empirical:>10.6f} {r.se:>9.2e} "
                f"{r.theoretical:>10.6f} {r.exact_k:>10.6f} {r.z:>7.2f}  "
                f"{'yes' if r.passed(self.z_crit, self.abs_tol) else 'NO'}"
            )
        if self.censored:
            lines.append(f"censored replicates (population cap): {self.censored}")
        sde = self.extra.get("sde")
        if sde:
            for b in sde["boxes"]:
                lo, hi = b["box"]
                lines.append(f"sde occupation box [{lo:g}, {hi:g}]: aggregate error {b['aggregate_rel_error']:.2%}, "
                             f"per-path median {b['per_path_median']:.2%}  {'yes' if b['passed'] else 'NO'}")
            for name, m in sde["means"].items():
                lim = f", limit {m['limit']:.4f}" if "limit" in m else ""
                lines.append(f"sde {name}({m['t']:g}) mean {m['mean']:.4f} +- {m['se']:.4f} "
                             f"(target {m['target']:.4f}{lim})  {'yes' if m['passed'] else 'NO'}")
        lines.extend(self.notes)
        return "\n".join(lines)

    def to_dict(self, include_wall_time: bool = False) -> dict:
        d = {
            "name": self.name,
            "passed": self.passed,
            "seed": self.seed,
            "version": __version__,
            "z_crit": self.z_crit,
            "abs_tol": self.abs_tol,
            "censored": self.censored,
            "notes": self.notes,
            "rows": [dict(zip(self.CSV_HEADER, r)) for r in self.csv_rows()],
            "extra": self.extra,
        }
        if include_wall_time:
            d["wall_time"] = self.wall_time
        return d


def _laplace_estimate(values: np.ndarray, lam: float) -> tuple[float, float]:
    e = np.exp(-lam * values)
    n = len(e)
    se = float(e.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(e.mean()), se


def _trend_notes(rows: list[ReportRow]) -> list[str]:
    """Soft check: bias beyond SE should not grow with k."""
    notes = []
    by_point: dict = {}
    for r in rows:
        by_point.setdefault((r.kind, r.t, r.lam), []).append(r)
    for (kind, t, lam), rs in by_point.items():
        excess = [max(abs(r.empirical - r.theoretical) - r.se, 0.0) for r in sorted(rs, key=lambda r: r.k)]
        inversions = sum(b > a for a, b in zip(excess, excess[1:]))
        if inversions:
            notes.append(f"note: {kind} t={t:g} lambda={lam:g}: {inversions} inversion(s) of the k-trend")
    return notes


def _pair_for(cfg: ExperimentConfig, k: int):
    if cfg.offspring_pgf is not None:
        h = cfg.immigration_pgf if cfg.immigration_pgf is not None else pgf_from_config({"type": "point", "n": 0})
        return cfg.offspring_pgf, h, ScalingScheme(k, cfg.gamma_scale or 1.0)
    pair = embed(cfg.branching, cfg.immigration, k, cfg.gamma_scale)
    return pair.g_k, pair.h_k, pair.scheme


def run_limit_verification(cfg: ExperimentConfig, threads: int = 1) -> ConvergenceReport:
    """Simulate the k-th chains and compare Laplace transforms with the CBI law."""
    start = time.perf_counter()
    law = CbiLaw(cfg.branching, cfg.immigration, cfg.x)
    theory = {(t, lam): laplace_transform(law, t, lam, cfg.ode_tol) for t in cfg.t_grid for lam in cfg.lam_grid}
    rows, censored = [], 0
    seed = RngSeed(cfg.seed)
    for ik, k in enumerate(cfg.k_list):
        g, h, scheme = _pair_for(cfg, k)
        y0 = int(round(k * cfg.x))
        times = sorted(set(cfg.t_grid) | {s for j in cfg.joint for s in j[:2]})
        steps = [scheme.steps(t) for t in times]
        vals, cens = sample_at_steps(DbiProcess(g, h), y0, steps, cfg.n_paths, seed.substream(ik), threads)
        censored += int(cens.sum())
        scaled = {t: vals[i][~cens] / k for i, t in enumerate(times)}
        for t in cfg.t_grid:
            for lam in cfg.lam_grid:
                emp, se = _laplace_estimate(scaled[t], lam)
                phi1, phi2 = composition_functionals(g, h, k, y0, t, lam, steps_per_unit=scheme.gamma_k)
                rows.append(ReportRow("marginal", k, t, lam, emp, se, theory[(t, lam)], phi1 * phi2,
                                      len(scaled[t])))
        for t1, t2, l1, l2 in cfg.joint:
            e = np.exp(-l1 * scaled[t1] - l2 * scaled[t2])
            se = float(e.std(ddof=1) / math.sqrt(len(e)))
            th = joint_laplace(law, [t1, t2], [l1, l2], cfg.ode_tol)
            rows.append(ReportRow("joint", k, t1, l1, float(e.mean()), se, th, math.nan, len(e), t2, l2))
    report = ConvergenceReport("limit-verify", rows, cfg.z_crit, cfg.abs_tol, cfg.seed,
                               notes=[SCOPE_NOTE] + _trend_notes(rows), censored=censored)
    report.wall_time = time.perf_counter() - start
    return report


def run_rayknight_verification(cfg: ExperimentConfig, threads: int = 1) -> ConvergenceReport:
    """Downcrossing chains against the limiting branching diffusions."""
    start = time.perf_counter()
    rk = cfg.rayknight
    bm = DriftedBm(float(rk.get("alpha", 0.5)), float(rk.get("beta", 0.0)))
    u = float(rk.get("u", 1.0))
    directions = [Direction(d) for d in rk.get("directions", ["up"])]
    t_max = max(cfg.t_grid)
    a = float(rk.get("a", t_max))
    seed = RngSeed(cfg.seed)
    rows, censored, extra, notes = [], 0, {}, [SCOPE_NOTE]
    for idir, direction in enumerate(directions):
        law = chain_law(bm, u, direction)
        for ik, k in enumerate(cfg.k_list):
            proc = chain_process(bm, k, direction)
            chain = simulate_crossing_chain(bm, k, u, direction, t_max, seed.substream(100 * idir + ik),
                                            n_paths=cfg.n_paths, a=a, threads=threads)
            censored += int(chain.censored.sum())
            for t in cfg.t_grid:
                v = chain.at(t)[~chain.censored]
                for lam in cfg.lam_grid:
                    emp, se = _laplace_estimate(v, lam)
                    th = laplace_transform(law, t, lam, cfg.ode_tol) if u > 0 else 1.0
                    phi1, phi2 = composition_functionals(proc.offspring, proc.immigration, k,
                                                         int(round(k * u)), t, lam)
                    rows.append(ReportRow(direction.value, k, t, lam, emp, se, th, phi1 * phi2, len(v)))
    sde = rk.get("sde")
    if sde:
        sk = int(sde.get("k", 20))
        rep = sde_cross_validate(
            bm, sk, u, a, int(sde.get("n_paths", 500)), seed.substream(999),
            t_max=float(sde.get("t", 1.0)), x0=float(sde.get("x0", 0.0)),
            time_cap=float(sde.get("time_cap", 1e4)), dt_factor=float(sde.get("dt_factor", 0.1)),
            threads=threads,
        )
        extra["sde"] = sde_summary(rep, float(sde.get("t", 1.0)), cfg.z_crit)
        if not extra["sde"]["passed"]:
            extra["failed"] = True
        notes.append(f"sde: {rep.n_censored} of {len(rep.reached)} paths censored by the time cap")
    report = ConvergenceReport("rayknight-verify", rows, cfg.z_crit, cfg.abs_tol, cfg.seed,
                               notes=notes + _trend_notes(rows), censored=censored, extra=extra)
    report.wall_time = time.perf_counter() - start
    return report


def sde_summary(rep, t: float, z_crit: float = TOL.z_crit, occ_tol: float = 0.05) -> dict:
    """Occupation-identity errors per box and xi/eta means against the limit."""
    boxes = []
    for (lo, hi), agg, per in rep.box_errors():
        boxes.append({"box": [lo, hi], "aggregate_rel_error": agg,
                      "per_path_median": float(np.nanmedian(per)),
                      "per_path_frac_over": float(np.nanmean(per > occ_tol)),
                      "passed": agg <= occ_tol})
    xi = rep.xi(t)
    xi_mean, xi_se = float(xi.mean()), float(xi.std(ddof=1) / math.sqrt(len(xi)))
    xi_target = cb_mean(rep.bm, rep.z0, t, "up")
    means = {"xi": {"t": t, "mean": xi_mean, "se": xi_se, "target": xi_target,
                    "passed": abs(xi_mean - xi_target) <= z_crit * xi_se}}
    if t <= rep.a:
        eta = rep.eta(t)
        m, se = float(eta.mean()), float(eta.std(ddof=1) / math.sqrt(len(eta)))
        target = eta_mean_k(rep, t)
        means["eta"] = {"t": t, "mean": m, "se": se, "target": target,
                        "limit": cb_mean(rep.bm, rep.z0, t, "down"),
                        "passed": abs(m - target) <= z_crit * se}
    passed = all(b["passed"] for b in boxes) and all(v["passed"] for v in means.values())
    return {"boxes": boxes, "means": means, "censored": rep.n_censored, "passed": passed}


def run_lemma22_table(cfg: ExperimentConfig):
    """Rows of the S_k and drift limits per k; second value is the monotone-decay flag."""
    rows = []
    for k in cfg.k_list:
        g, _, scheme = _pair_for(cfg, k)
        rows.extend(lemma22_rows(g, scheme, cfg.branching, cfg.lam_grid))
    ok = True
    for lam in cfg.lam_grid:
        gaps = [r[4] for r in rows if r[1] == lam]
        if lam > 0 and any(b >= a for a, b in zip(gaps, gaps[1:])):
            ok = False
    return rows, ok


LEMMA22_HEADER = ("k", "lambda", "S_k", "S_limit", "S_gap", "drift_k", "drift_limit", "drift_gap")


def run_generator_table(cfg: ExperimentConfig):
    """Per (k, lambda): sup over the x-grid of |A_k e - A e|, plus alpha_k, beta_k, H_k."""
    rows = []
    for k in cfg.k_list:
        g, h, scheme = _pair_for(cfg, k)
        for lam in cfg.lam_grid:
            x = [v for v in cfg.x_grid]
            tab = generator_actions(g, h, scheme, cfg.branching, cfg.immigration, lam, x)
            rows.append((k, lam, float(compute_Rk(g, scheme, min(lam, k))), tab.S_k,
                         float(compute_Fk(h, scheme, min(lam, k))), tab.sup_diff,
                         tab.alpha_k, tab.beta_k, tab.H_k))
    ok = True
    for lam in cfg.lam_grid:
        sups = [r[5] for r in rows if r[1] == lam]
        if any(b >= a for a, b in zip(sups, sups[1:])):
            ok = False
    return rows, ok


GENERATOR_HEADER = ("k", "lambda", "R_k", "S_k", "F_k", "sup_diff", "alpha_k", "beta_k", "H_k")


def run_psi_solve(cfg: ExperimentConfig):
    p = cfg.psi
    lams = p.get("lambda", list(cfg.lam_grid))
    ts = p.get("t", list(cfg.t_grid))
    t_max = float(p.get("t_max", max(ts)))
    law = CbiLaw(cfg.branching, cfg.immigration, cfg.x)
    rows = []
    for lam in lams:
        sol = solve_psi(cfg.branching, float(lam), t_max, cfg.ode_tol, F=cfg.immigration)
        for t in ts:
            psi, integral = sol.psi(t), sol.immigration_integral(t)
            rows.append((float(t), float(lam), psi, integral, math.exp(-law.x * psi - integral)))
    return rows


PSI_HEADER = ("t", "lambda", "psi", "immigration_integral", "laplace")


def run_embed(cfg: ExperimentConfig) -> tuple[list[dict], bool]:
    out, ok = [], True
    for k in cfg.k_list:
        try:
            pair = embed(cfg.branching, cfg.immigration, k, cfg.gamma_scale)
        except InfeasibleAtThisK as exc:
            out.append({"k": k, "error": str(exc), "min_k": exc.min_k})
            ok = False
            continue
        lam = np.linspace(0.0, k / 2.0, 201)
        err_R = np.max(np.abs(compute_Rk(pair.g_k, pair.scheme, lam) - cfg.branching(lam))
                       / np.maximum(1.0, np.abs(cfg.branching(lam))))
        err_F = np.max(np.abs(compute_Fk(pair.h_k, pair.scheme, lam) - cfg.immigration(lam))
                       / np.maximum(1.0, np.abs(cfg.immigration(lam))))
        identity_ok = bool(err_R <= TOL.embed_identity and err_F <= TOL.embed_identity)
        ok &= identity_ok
        out.append({"k": k, "gamma_k": pair.scheme.gamma_k, "gamma0": pair.scheme.gamma0,
                    "g_k": pair.g_k.to_config(), "h_k": pair.h_k.to_config(),
                    "max_rel_err_R": float(err_R), "max_rel_err_F": float(err_F),
                    "identity_ok": identity_ok})
    return out, ok


def run_dbi_simulate(cfg: ExperimentConfig, threads: int = 1):
    """Replicate paths of the configured chain; returns (summary, exported paths)."""
    d = cfg.dbi
    g = cfg.offspring_pgf
    if g is None:
        raise ConfigError("dbi-simulate needs an 'offspring' PGF")
    h = cfg.immigration_pgf or pgf_from_config({"type": "point", "n": 0})
    proc = DbiProcess(g, h)
    y0, n = int(d.get("y0", 1)), int(d.get("n_steps", 10))
    vals, cens = sample_at_steps(proc, y0, np.arange(n + 1), cfg.n_paths, RngSeed(cfg.seed), threads)
    live = vals[:, ~cens]
    rows = []
    for i in range(n + 1):
        m = float(live[i].mean())
        se = float(live[i].std(ddof=1) / math.sqrt(live.shape[1])) if live.shape[1] > 1 else 0.0
        rows.append((i, m, se, mean_after_n(proc, y0, i)))
    exported = [simulate_path(proc, y0, n, RngSeed(cfg.seed).substream(10_000 + j))
                for j in range(int(d.get("export_paths", 0)))]
    return rows, exported, int(cens.sum())


DBI_HEADER = ("step", "mean", "se", "theoretical_mean")


def write_table(path, header, rows) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_json(path, obj) -> None:
    with open(Path(path), "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def metadata(cfg: ExperimentConfig, wall_time: float) -> dict:
    return {"seed": cfg.seed, "kind": cfg.kind, "version": __version__, "backend": BACKEND,
            "wall_time": wall_time}
