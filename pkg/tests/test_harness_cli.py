import json
import math
from pathlib import Path

import pytest

from branchlim import cli, harness
from branchlim.harness import ConfigError, ExperimentConfig

ROOT = Path(__file__).resolve().parents[1]
SCHEMA = ROOT / "src" / "branchlim" / "schema" / "csv_schema.json"


def _cfg(**over):
    d = {
        "schema_version": 1,
        "kind": "limit-verify",
        "seed": 5,
        "n_paths": 4000,
        "branching": {"alpha": 0.5},
        "immigration": {"b": 1.0},
        "offspring": [0.5, 0, 0.5],
        "immigration_pgf": {"type": "point", "n": 1},
        "scheme": {"k": [20, 40]},
        "grid": {"t": [1.0], "lambda": [1.0], "x": 1.0, "joint": [[0.5, 1.0, 1.0, 1.0]]},
    }
    d.update(over)
    return d


class TestConfig:
    def test_unknown_top_key(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            ExperimentConfig.from_dict(_cfg(colour="blue"))

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError, match="grid"):
            ExperimentConfig.from_dict(_cfg(grid={"t": [1.0], "mu": 3}))
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(_cfg(branching={"alpha": 0.5, "sigma": 1}))

    def test_schema_version(self):
        with pytest.raises(ConfigError, match="schema_version"):
            ExperimentConfig.from_dict(_cfg(schema_version=2))

    @pytest.mark.parametrize("over", [{"n_paths": 0}, {"scheme": {"k": [40, 20]}}, {"scheme": {"k": []}},
                                      {"grid": {"t": []}}, {"kind": "plot"}])
    def test_invariants(self, over):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(_cfg(**over))

    def test_shipped_configs_load(self):
        for path in sorted((ROOT / "configs").glob("*.json")):
            ExperimentConfig.load(path)

    def test_schema_lists_report_columns(self):
        schema = json.loads(SCHEMA.read_text())
        cols = list(schema["files"]["report.csv"]["columns"])
        assert tuple(cols) == harness.ConvergenceReport.CSV_HEADER
        assert tuple(schema["files"]["lemma22.csv"]["columns"]) == harness.LEMMA22_HEADER
        assert tuple(schema["files"]["generator.csv"]["columns"]) == harness.GENERATOR_HEADER
        assert tuple(schema["files"]["psi.csv"]["columns"]) == harness.PSI_HEADER
        assert tuple(schema["files"]["dbi_means.csv"]["columns"]) == harness.DBI_HEADER


class TestCampaigns:
    def test_trivial_mechanism(self):
        cfg = ExperimentConfig.from_dict(_cfg(branching={}, immigration={}, offspring={"type": "point", "n": 1},
                                              immigration_pgf={"type": "point", "n": 0},
                                              grid={"t": [0.5, 1.0], "lambda": [0.5, 2.0], "x": 1.0}))
        rep = harness.run_limit_verification(cfg)
        assert rep.passed
        for r in rep.rows:
            assert r.empirical == pytest.approx(math.exp(-r.lam), abs=1e-14) and r.se <= 1e-15

    def test_deterministic_report(self):
        cfg = ExperimentConfig.from_dict(_cfg())
        a = harness.run_limit_verification(cfg)
        b = harness.run_limit_verification(cfg, threads=3)
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
        assert a.summary() == b.summary()

    def test_se_scaling(self):
        small = harness.run_limit_verification(ExperimentConfig.from_dict(_cfg(n_paths=5000)))
        big = harness.run_limit_verification(ExperimentConfig.from_dict(_cfg(n_paths=20000)))
        for a, b in zip(small.rows, big.rows):
            assert b.se / a.se == pytest.approx(0.5, rel=0.2)

    def test_exact_k_brackets_bias(self):
        rep = harness.run_limit_verification(ExperimentConfig.from_dict(_cfg(n_paths=20000)))
        for r in rep.rows:
            if r.kind == "marginal":
                assert abs(r.empirical - r.exact_k) <= 4 * r.se

    def test_rayknight_zero_budget(self):
        cfg = ExperimentConfig.from_dict({
            "kind": "rayknight-verify", "n_paths": 50, "scheme": {"k": [10]},
            "grid": {"t": [0.5, 1.0], "lambda": [1.0, 2.0]},
            "rayknight": {"alpha": 0.5, "u": 0.0, "directions": ["up"]},
        })
        rep = harness.run_rayknight_verification(cfg)
        assert rep.passed and all(r.empirical == 1.0 and r.theoretical == 1.0 for r in rep.rows)

    def test_pass_rule(self):
        row = harness.ReportRow("marginal", 10, 1.0, 1.0, 0.5, 0.01, 0.529, 0.5, 100)
        assert row.passed(3.0, 0.0) and not row.passed(2.0, 0.0) and row.passed(2.0, 0.01)
        assert row.z == pytest.approx(-2.9)

    def test_lemma22_flags(self):
        cfg = ExperimentConfig.from_dict({
            "kind": "lemma22-table", "branching": {"alpha": 0.5}, "offspring": [0.5, 0, 0.5],
            "scheme": {"k": [10, 100, 1000]}, "grid": {"lambda": [0.0, 2.0]},
        })
        rows, ok = harness.run_lemma22_table(cfg)
        assert ok and rows[0][2:] == (0.0,) * 6


def _write(tmp_path, d):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(d))
    return p


class TestCli:
    def test_verify_limit(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = cli.main(["verify-limit", "--config", str(_write(tmp_path, _cfg())), "--seed", "9",
                         "--threads", "2", "--out", str(out)])
        assert code == 0
        assert {"report.csv", "report.json", "summary.txt", "meta.json"} <= {p.name for p in out.iterdir()}
        meta = json.loads((out / "meta.json").read_text())
        assert meta["seed"] == 9 and meta["passed"] and "wall_time" in meta
        assert "PASS" in capsys.readouterr().out

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = _write(tmp_path, _cfg())
        for name, threads in (("a", "1"), ("b", "8")):
            assert cli.main(["verify-limit", "--config", str(cfg), "--seed", "3", "--threads", threads,
                             "--out", str(tmp_path / name)]) == 0
        for f in ("report.csv", "report.json", "summary.txt"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_failing_check_exits_one(self, tmp_path):
        # theory for a different immigration rate: the comparison must fail
        d = _cfg(immigration={"b": 3.0}, n_paths=20000, grid={"t": [1.0], "lambda": [1.0], "x": 1.0})
        code = cli.main(["verify-limit", "--config", str(_write(tmp_path, d)), "--out", str(tmp_path / "o")])
        assert code == 1

    def test_bad_config_exits_two(self, tmp_path, capsys):
        code = cli.main(["verify-limit", "--config", str(_write(tmp_path, _cfg(bogus=1))), "--out", str(tmp_path)])
        assert code == 2 and "bogus" in capsys.readouterr().err

    def test_kind_mismatch(self, tmp_path):
        assert cli.main(["lemma22", "--config", str(_write(tmp_path, _cfg())), "--out", str(tmp_path)]) == 2

    def test_seed_range(self, tmp_path):
        with pytest.raises(SystemExit):
            cli.main(["embed", "--config", "x.json", "--seed", str(2**64), "--out", str(tmp_path)])

    @pytest.mark.parametrize("cmd, cfg, produced", [
        ("simulate-dbi", "simulate_dbi.json", "dbi_means.csv"),
        ("solve-psi", "solve_psi.json", "psi.csv"),
        ("embed", "embed.json", "embed.csv"),
        ("lemma22", "lemma22.json", "lemma22.csv"),
        ("generator-table", "generator.json", "generator.csv"),
    ])
    def test_shipped_configs(self, cmd, cfg, produced, tmp_path):
        assert cli.main([cmd, "--config", str(ROOT / "configs" / cfg), "--seed", "1", "--out", str(tmp_path)]) == 0
        assert (tmp_path / produced).exists() and (tmp_path / "summary.txt").exists()

    def test_embed_infeasible_fails(self, tmp_path):
        d = {"kind": "embed", "branching": {"beta": 0.5}, "scheme": {"k": [1, 2], "gamma_scale": 1.0}}
        assert cli.main(["embed", "--config", str(_write(tmp_path, d)), "--out", str(tmp_path)]) == 1
