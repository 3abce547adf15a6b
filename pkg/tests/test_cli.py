import csv
import shutil

import numpy as np
import pytest

import rsheston.cli as cli


@pytest.fixture()
def set1_path(tmp_path):
    return shutil.copy(cli.shipped_config("set1"), tmp_path / "set1.cfg")


@pytest.fixture()
def set2_path(tmp_path):
    return shutil.copy(cli.shipped_config("set2"), tmp_path / "set2.cfg")


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        comment = fh.readline()
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    return comment, rows


class TestConfigParsing:
    def test_shipped_configs_load(self):
        for name in ("set1", "set2"):
            cfg = cli.load_config(cli.shipped_config(name))
            assert cfg.params.n_states == 2
            assert cfg.steps_per_year == 250

    def test_parse_error_carries_line_number(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[model]\nvariant = smmh_rho\nthis line has no equals\n")
        with pytest.raises(cli.ParseError) as exc:
            cli.load_config(bad)
        assert exc.value.line == 3

    def test_duplicate_key_rejected(self, tmp_path):
        bad = tmp_path / "dup.cfg"
        bad.write_text("[model]\nT = 1\nT = 2\n")
        with pytest.raises(cli.ParseError):
            cli.load_config(bad)

    def test_comments_and_scalar_broadcast(self, tmp_path, set1_path):
        text = set1_path.read_text().replace("r.1 = 0.03\nr.2 = 0.01", "r = 0.02  # flat rate")
        cfg_file = tmp_path / "flat.cfg"
        cfg_file.write_text(text)
        cfg = cli.load_config(cfg_file)
        np.testing.assert_array_equal(cfg.params.r, [0.02, 0.02])


class TestValidateCommand:
    def test_set1_passes(self, set1_path, capsys):
        assert cli.main(["validate", str(set1_path)]) == 0
        out = capsys.readouterr().out
        assert "feller state 1" in out
        assert "overall: pass" in out

    def test_feller_violation_exits_one(self, tmp_path, set1_path, capsys):
        text = set1_path.read_text().replace("chi = 0.35", "chi = 1.0")
        bad = tmp_path / "feller.cfg"
        bad.write_text(text)
        assert cli.main(["validate", str(bad)]) == 1
        assert "FAIL" in capsys.readouterr().out

    def test_malformed_file_exits_two(self, tmp_path, capsys):
        bad = tmp_path / "broken.cfg"
        bad.write_text("[model\n")
        assert cli.main(["validate", str(bad)]) == 2
        assert "line 1" in capsys.readouterr().err

    def test_missing_file_exits_two(self, tmp_path):
        assert cli.main(["validate", str(tmp_path / "nope.cfg")]) == 2


class TestSolveCommand:
    def test_set1_solution_table(self, set1_path, tmp_path, capsys):
        out = tmp_path / "solve.csv"
        assert cli.main(["solve", str(set1_path), "--t-grid", "6", "--out", str(out)]) == 0
        comment, rows = read_csv(out)
        assert comment.startswith("# config_sha256=")
        assert len(rows) == 12
        first = rows[0]
        assert float(first["t"]) == 0.0 and first["state"] == "1"
        assert float(first["phi"]) == pytest.approx(7.4261, abs=0.005)
        # terminal rows: hedging gone, regime expectation back at 1
        for row in rows[-2:]:
            assert float(row["t"]) == 5.0
            assert float(row["pi_h"]) == 0.0
            assert float(row["xi"]) == 1.0
        # 17 significant digits in play
        assert len(first["phi"].replace(".", "").replace("-", "").lstrip("0")) >= 16

    def test_zero_correlation_zeroes_hedging_column(self, tmp_path, set1_path):
        text = set1_path.read_text().replace("variant = smmh_rho", "variant = smmh")
        text = text.replace("rho = -0.8", "rho = 0.0")
        cfg_file = tmp_path / "norho.cfg"
        cfg_file.write_text(text)
        out = tmp_path / "solve.csv"
        assert cli.main(["solve", str(cfg_file), "--t-grid", "5", "--out", str(out)]) == 0
        _, rows = read_csv(out)
        assert all(float(r["pi_h"]) == 0.0 for r in rows)

    def test_mc_xi_route(self, set1_path, tmp_path):
        out = tmp_path / "solve_mc.csv"
        code = cli.main(
            ["solve", str(set1_path), "--t-grid", "3", "--out", str(out), "--xi-method", "mc"]
        )
        assert code == 0
        _, rows = read_csv(out)
        ode_out = tmp_path / "solve_ode.csv"
        cli.main(["solve", str(set1_path), "--t-grid", "3", "--out", str(ode_out)])
        _, ode_rows = read_csv(ode_out)
        # the two xi routes agree loosely at 10^4 chain paths
        assert float(rows[0]["phi"]) == pytest.approx(float(ode_rows[0]["phi"]), abs=0.01)

    def test_mmh_partial_mc_route(self, tmp_path, set1_path):
        text = set1_path.read_text().replace("variant = smmh_rho", "variant = mmh")
        text = text.replace("rho = -0.8", "rho = 0.0")
        text = text.replace("d = 1.7", "lambda_hat.1 = 1.7\nlambda_hat.2 = 2.21")
        text = text.replace("n_paths_xi = 10000", "n_paths_xi = 150")
        cfg_file = tmp_path / "mmh.cfg"
        cfg_file.write_text(text)
        out = tmp_path / "solve_mmh.csv"
        assert cli.main(["solve", str(cfg_file), "--t-grid", "3", "--out", str(out)]) == 0
        _, rows = read_csv(out)
        assert rows[0]["D_or_B"] == ""  # no scalar exponent in the general variant
        assert float(rows[0]["phi"]) == pytest.approx(float(rows[0]["xi"]) * (10**0.3 / 0.3), rel=1e-12)
        assert float(rows[-1]["phi"]) == pytest.approx(10**0.3 / 0.3, rel=1e-9)

    def test_failed_assumption_exits_one(self, tmp_path, set1_path, capsys):
        text = set1_path.read_text().replace("delta = 0.3", "delta = 0.999")
        text = text.replace("rho = -0.8", "rho = 0.8")
        bad = tmp_path / "unsolvable.cfg"
        bad.write_text(text)
        assert cli.main(["solve", str(bad), "--out", str(tmp_path / "x.csv")]) == 1
        assert "tilted_rate_positive" in capsys.readouterr().err


class TestSimulateCommand:
    def test_small_run_writes_both_csvs(self, set1_path, tmp_path, capsys):
        out = tmp_path / "sim.csv"
        code = cli.main(
            ["simulate", str(set1_path), "--paths", "300", "--steps-per-year", "50",
             "--out", str(out), "--bins", "10", "--overflow-at", "100"]
        )
        assert code == 0
        comment, rows = read_csv(out)
        assert comment.startswith("# config_sha256=")
        assert rows[0]["n_paths"] == "300"
        assert float(rows[0]["std_err"]) > 0
        _, hist_rows = read_csv(tmp_path / "sim_hist.csv")
        assert len(hist_rows) == 11  # 10 bins + overflow row
        assert hist_rows[-1]["bin_hi"] == "inf"
        assert sum(int(r["count"]) for r in hist_rows) == 300

    def test_single_path_has_no_stderr(self, set1_path, tmp_path):
        out = tmp_path / "sim1.csv"
        cli.main(["simulate", str(set1_path), "--paths", "1", "--steps-per-year", "20",
                  "--out", str(out)])
        _, rows = read_csv(out)
        assert rows[0]["std_err"] == ""

    def test_set2_mean_lands_near_reported_value(self, set2_path, tmp_path):
        out = tmp_path / "sim2.csv"
        cli.main(["simulate", str(set2_path), "--paths", "2000", "--out", str(out)])
        _, rows = read_csv(out)
        mean, err = float(rows[0]["mean"]), float(rows[0]["std_err"])
        assert abs(mean - (-0.0802)) < 3 * err


class TestDiagnoseCommand:
    def test_anchor_checkpoint_z_is_zero(self, set1_path, tmp_path):
        out = tmp_path / "diag.csv"
        code = cli.main(
            ["diagnose", str(set1_path), "--checkpoints", "0", "--paths", "200", "--out", str(out)]
        )
        assert code == 0
        _, rows = read_csv(out)
        assert float(rows[0]["z_score"]) == 0.0

    def test_constant_strategy_flag(self, set1_path, tmp_path):
        out = tmp_path / "diag_const.csv"
        code = cli.main(
            ["diagnose", str(set1_path), "--checkpoints", "0,5", "--strategy", "const:1.0",
             "--paths", "400", "--out", str(out)]
        )
        assert code == 0
        _, rows = read_csv(out)
        assert len(rows) == 2

    def test_unknown_strategy_exits_one(self, set1_path, tmp_path):
        code = cli.main(
            ["diagnose", str(set1_path), "--strategy", "momentum", "--paths", "10",
             "--out", str(tmp_path / "d.csv")]
        )
        assert code == 1
