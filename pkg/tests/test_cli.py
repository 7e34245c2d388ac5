import csv
import json

import numpy as np
import pytest

from momentopt import cli


def run(tmp_path, *argv):
    return cli.main([*argv, "--output-dir", str(tmp_path)])


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestEstimate:
    def test_gn_table1(self, tmp_path):
        code = run(
            tmp_path,
            "estimate",
            "--model",
            "ma1-calibrated",
            "--method",
            "gn",
            "--gamma",
            "0.1",
            "--theta0",
            "-0.6",
            "--iters",
            "99",
        )
        assert code == 0
        rows = read_csv(tmp_path / "trace_gn_000.csv")
        assert len(rows) == 100
        assert float(rows[-1]["theta_1"]) == pytest.approx(-0.339, abs=1e-3)
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["methods"]["gn"]["crashes"] == 0

    def test_nr_diverges(self, tmp_path):
        run(
            tmp_path,
            "estimate",
            "--model",
            "ma1-calibrated",
            "--method",
            "nr",
            "--theta0",
            "-0.6",
            "--iters",
            "99",
        )
        rows = read_csv(tmp_path / "trace_nr_000.csv")
        assert float(rows[-1]["theta_1"]) <= -0.99

    def test_empty_starts(self, tmp_path, capsys):
        assert run(tmp_path, "estimate", "--model", "ma1-calibrated", "--sobol-starts", "0") != 0
        assert "empty start list" in capsys.readouterr().err

    def test_sobol_starts_and_crash_count(self, tmp_path):
        code = run(
            tmp_path,
            "estimate",
            "--model",
            "ma1",
            "--p",
            "12",
            "--seed",
            "1",
            "--sobol-starts",
            "4",
            "--method",
            "gn,nr",
            "--iters",
            "300",
        )
        assert code == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert set(summary["methods"]) == {"gn", "nr"}
        assert summary["methods"]["gn"]["runs"] == 4
        assert len(list(tmp_path.glob("trace_*.csv"))) == 8

    def test_multi_dim_start(self, tmp_path):
        assert (
            run(tmp_path, "estimate", "--model", "gaussian", "--theta0=0.5,1.5", "--iters", "50")
            == 0
        )
        assert "theta_2" in read_csv(tmp_path / "trace_gn_000.csv")[0]

    def test_wrong_start_length(self, tmp_path):
        assert (
            run(tmp_path, "estimate", "--model", "gaussian", "--theta0", "0.5") == cli.EXIT_CONFIG
        )

    def test_global_step(self, tmp_path):
        run(
            tmp_path,
            "estimate",
            "--model",
            "ma1",
            "--p",
            "12",
            "--seed",
            "1",
            "--theta0",
            "0.95",
            "--gamma",
            "1.0",
            "--global-step",
            "--iters",
            "200",
        )
        rows = read_csv(tmp_path / "trace_gn_000.csv")
        assert {r["global_accepted"] for r in rows} <= {"0", "1"}

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            run(
                out,
                "estimate",
                "--model",
                "ma1",
                "--p",
                "4",
                "--sobol-starts",
                "3",
                "--iters",
                "40",
            )
        for name in ("trace_gn_000.csv", "trace_gn_002.csv", "summary.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestConfig:
    def test_config_and_override(self, tmp_path):
        cfg = tmp_path / "exp.toml"
        cfg.write_text(
            '[model]\nname = "ma1-calibrated"\n\n[optimizer]\nmethod = "gn"\ngamma = 0.1\nmax_iter = 5\n\n[starts]\ntheta0 = [-0.6]\n'
        )
        out = tmp_path / "out"
        assert cli.main(["estimate", "--config", str(cfg), "--output-dir", str(out)]) == 0
        assert len(read_csv(out / "trace_gn_000.csv")) == 6
        assert (
            cli.main(["estimate", "--config", str(cfg), "--iters", "9", "--output-dir", str(out)])
            == 0
        )
        assert len(read_csv(out / "trace_gn_000.csv")) == 10

    def test_parse_error(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("[model]\nname = \n")
        assert (
            cli.main(["estimate", "--config", str(cfg), "--output-dir", str(tmp_path)])
            == cli.EXIT_CONFIG
        )
        assert "line 2" in capsys.readouterr().err

    def test_unknown_field(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("[optimizer]\nlearning_rate = 0.1\n")
        assert (
            cli.main(["estimate", "--config", str(cfg), "--output-dir", str(tmp_path)])
            == cli.EXIT_CONFIG
        )
        assert "optimizer.learning_rate" in capsys.readouterr().err

    def test_invalid_gamma(self, tmp_path):
        assert run(tmp_path, "estimate", "--theta0", "0.1", "--gamma", "2.0") == cli.EXIT_CONFIG

    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "envout"))
        assert cli.main(["sobol-dump", "--dim", "2", "--count", "8", "--seed", "1"]) == 0
        assert (tmp_path / "envout" / "sobol.csv").exists()


class TestRankGridCommand:
    def test_gaussian(self, tmp_path):
        assert (
            run(
                tmp_path,
                "rank-grid",
                "--model",
                "gaussian",
                "--resolution",
                "5",
                "--lower=-1,0.1",
                "--upper",
                "1,2",
            )
            == 0
        )
        data = json.loads((tmp_path / "rank_grid.json").read_text())
        assert data["verdict"] == "holds" and data["min_value"] == pytest.approx(1.0, abs=1e-10)
        assert read_csv(tmp_path / "rank_grid.csv")[0].keys() >= {"sigma_min"}

    @pytest.mark.parametrize("weighting,verdict", [("identity", "holds"), ("optimal", "fails")])
    def test_p12(self, tmp_path, weighting, verdict):
        run(
            tmp_path,
            "rank-grid",
            "--model",
            "ma1",
            "--p",
            "12",
            "--seed",
            "1",
            "--weighting",
            weighting,
            "--lower=-0.9",
            "--upper",
            "0.9",
        )
        data = json.loads((tmp_path / "rank_grid.json").read_text())
        assert data["verdict"] == verdict
        assert list(read_csv(tmp_path / "rank_grid.csv")[0]) == ["theta1", "theta2", "sigma_min"]

    def test_single_node(self, tmp_path):
        run(
            tmp_path,
            "rank-grid",
            "--model",
            "ma1-calibrated",
            "--resolution",
            "1",
            "--lower=-0.5",
            "--upper",
            "0.5",
        )
        rows = read_csv(tmp_path / "rank_grid.csv")
        assert len(rows) == 1
        assert float(rows[0]["sigma_min"]) == pytest.approx((1 - 0.25) / 1.25**2)


class TestOtherCommands:
    def test_convexity_map(self, tmp_path):
        assert (
            run(
                tmp_path,
                "convexity-map",
                "--model",
                "ma1-calibrated",
                "--lower=-0.95",
                "--upper",
                "0.95",
            )
            == 0
        )
        data = json.loads((tmp_path / "convexity_map.json").read_text())
        assert data["min_lambda"] < 0 < data["max_lambda"]
        assert list(read_csv(tmp_path / "convexity_map.csv")[0]) == ["theta_1", "lambda_min"]

    def test_sobol_dump(self, tmp_path):
        run(
            tmp_path,
            "sobol-dump",
            "--dim",
            "1",
            "--count",
            "4",
            "--seed",
            "5",
            "--lower=-10",
            "--upper",
            "10",
        )
        xs = np.array([float(r["x_1"]) for r in read_csv(tmp_path / "sobol.csv")])
        assert xs.shape == (4,) and np.all(np.abs(xs) <= 10)

    def test_compare(self, tmp_path):
        code = run(
            tmp_path,
            "compare",
            "--model",
            "ma1-calibrated",
            "--theta0",
            "-0.6",
            "--method",
            "gn,bfgs,nelder-mead,grid,annealing",
            "--iters",
            "200",
        )
        assert code == 0
        data = json.loads((tmp_path / "compare.json").read_text())
        for m in ("gn", "bfgs", "nelder-mead", "grid"):
            assert data["methods"][m]["avg"][0] == pytest.approx(-0.339, abs=1e-3)
        rows = read_csv(tmp_path / "compare_traces.csv")
        assert {r["method"] for r in rows} == {"gn", "bfgs", "nelder-mead", "grid", "annealing"}

    def test_compare_unknown_method(self, tmp_path):
        assert run(tmp_path, "compare", "--theta0", "0.1", "--method", "tabu") == cli.EXIT_CONFIG


class TestReplicate:
    @pytest.mark.parametrize("recipe", cli.RECIPES)
    def test_recipes_pass(self, tmp_path, recipe):
        assert run(tmp_path, "replicate", recipe) == 0
        stem = "replicate_" + recipe.replace("-", "_")
        rows = read_csv(tmp_path / f"{stem}.csv")
        assert rows and all(r["pass"] == "1" for r in rows)

    def test_unknown_recipe(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as info:
            run(tmp_path, "replicate", "figure9")
        assert info.value.code != 0
        assert "table1" in capsys.readouterr().err

    def test_failed_check_exit_code(self, tmp_path, monkeypatch):
        monkeypatch.setitem(cli.RECIPE_FUNCS, "table1", lambda: [cli._check("x", 0.0, 1.0, 0.1)])
        assert run(tmp_path, "replicate", "table1") == cli.EXIT_FAILED_CHECKS
