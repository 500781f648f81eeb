import csv
import io

import numpy as np
import pytest

from vlcqos.cli import EXIT_CONFIG, EXIT_OK, EXIT_VALIDATION, main
from vlcqos.experiments import (ConfigError, parse_config, run_delay_bound_sweep, run_ec_sweep,
                                run_max_arrival_sweep, run_opt_rate_sweep)
from vlcqos.phy import rate_interval, default_config


def rows_of(text):
    lines = text.splitlines()
    assert lines[0].startswith("# vlcqos 0.1.0 ") and "spec-hash=" in lines[0]
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def col(rows, key, **match):
    return np.array([float(r[key]) for r in rows
                     if all(float(r[k]) == pytest.approx(v) for k, v in match.items())])


class TestParsing:
    def test_defaults(self):
        spec = parse_config("", "opt-rate-sweep")
        assert spec.phy == default_config()
        assert spec.sources == ((0.3, 0.7),)

    def test_units(self):
        spec = parse_config("[phy]\navg_power = 150mW\n[sweep]\npowers = 100 mW, 0.3W, 2\n"
                            "theta_db = -30, -3\n", "effective-capacity-sweep")
        assert spec.phy.avg_power == pytest.approx(0.15)
        assert spec.powers == pytest.approx((0.1, 0.3, 2.0))
        assert spec.thetas == pytest.approx((1e-3, 10 ** -0.3))

    def test_ranges(self):
        spec = parse_config("[sweep]\ntheta_t = logspace(-6, -2, 5)\nloads = linspace(0.5, 0.9, 3)\n",
                            "opt-rate-sweep")
        assert spec.theta_ts == pytest.approx((1e-6, 1e-5, 1e-4, 1e-3, 1e-2))
        assert spec.loads == pytest.approx((0.5, 0.7, 0.9))

    def test_source_pairs(self):
        spec = parse_config("[source]\ngamma = 0.3, 0.5\nbeta = 0.7, 0.5\n", "max-arrival-sweep")
        assert spec.sources == ((0.3, 0.7), (0.5, 0.5))

    @pytest.mark.parametrize("text, where", [
        ("[sweep]\n\ntheta = 1e-3, abc\n", "[sweep] theta (line 3)"),
        ("[phy]\nwarp_factor = 9\n", "[phy] warp_factor (line 2)"),
        ("[phy]\nfov_angle = 30\ncell_radius = 5\n", "field-of-view"),
        ("[source]\ngamma = 0.1, 0.2\nbeta = 0.1, 0.2, 0.3\n", "[source] beta (line 3)"),
        ("[sweep]\ntheta = 1e-3\ntheta_db = -30\n", "[sweep] theta (line 2)"),
        ("[sweep]\npowers = -1\n", "[sweep] powers"),
        ("[bounds]\neps = 2\n", "[bounds] eps"),
        ("[bogus]\nx = 1\n", "[bogus]"),
        ("no section header\n", "no section"),
    ])
    def test_errors_name_the_field(self, text, where):
        with pytest.raises(ConfigError) as err:
            parse_config(text, "opt-rate-sweep")
        assert where.lower() in str(err.value).lower()

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError):
            parse_config("", "plot-everything")


class TestSweeps:
    cfg_text = "[sweep]\ntheta_t = logspace(-7, 0, 15)\ntheta = logspace(-8, 1, 10)\n" \
               "powers = 100mW, 200mW\n"

    def test_opt_rate(self):
        spec = parse_config(self.cfg_text, "opt-rate-sweep")
        rows = rows_of(run_opt_rate_sweep(spec).to_csv(spec))
        for p in (0.1, 0.2):
            rho = col(rows, "rho_star", power_w=p)
            theta_t = col(rows, "theta_t", power_w=p)
            assert np.all(np.diff(theta_t) > 0)
            assert np.all(np.diff(rho) <= 1e-6 * rho[0])
            assert rho[-1] == pytest.approx(rate_interval(spec.phy.with_(avg_power=p)).rho_min)
        assert col(rows, "rho_star", power_w=0.2)[0] >= col(rows, "rho_star", power_w=0.1)[0]

    def test_effective_capacity(self):
        spec = parse_config("[sweep]\ntheta_t_db = -60, -3\ntheta = logspace(-9, 1, 30)\n",
                            "effective-capacity-sweep")
        rows = rows_of(run_ec_sweep(spec).to_csv(spec))
        rho_min = rate_interval(spec.phy).rho_min
        flat = col(rows, "effective_capacity", theta_t=10 ** -0.3)
        np.testing.assert_allclose(flat, rho_min, rtol=1e-9)
        ec = col(rows, "effective_capacity", theta_t=1e-6)
        assert np.all(np.diff(ec) <= 1e-12 * ec[0])
        opt = rows[0]
        assert ec[0] == pytest.approx(float(opt["rho_star"]) * float(opt["p_on_star"]), rel=1e-4)

    def test_max_arrival(self):
        spec = parse_config("[source]\ngamma = 0.3, 0.1\nbeta = 0.7, 0.3\n"
                            "[sweep]\ntheta = 1e-9, 1e-6, 10\n", "max-arrival-sweep")
        rows = rows_of(run_max_arrival_sweep(spec).to_csv(spec))
        rho_min = rate_interval(spec.phy).rho_min
        for r in rows:
            theta, fixed, ref = float(r["theta"]), float(r["delta_fixed"]), float(r["delta_ref"])
            if theta == pytest.approx(1e-6):
                assert ref >= fixed
            if theta == pytest.approx(1e-9):
                assert fixed == pytest.approx(float(r["rho_star"]) * float(r["p_on_star"]), rel=1e-3)
            if theta == pytest.approx(10):
                p_os = float(r["beta_s"]) / (float(r["gamma_s"]) + float(r["beta_s"]))
                assert fixed == pytest.approx(p_os * rho_min, rel=1e-3)
        small = col(rows, "delta_fixed", theta=1e-9)
        assert small[0] == pytest.approx(small[1], rel=1e-3)

    def test_delay_bounds(self):
        spec = parse_config("[sweep]\npowers = 0.1, 0.2\nloads = 0.5, 0.8, 0.95, 1.0\n",
                            "delay-bound-sweep")
        rows = rows_of(run_delay_bound_sweep(spec).to_csv(spec))
        for p in (0.1, 0.2):
            tau = col(rows, "tau_frames", power_w=p)
            assert np.all(np.diff(tau[:3]) > 0) and tau[3] == np.inf
            assert [r["status"] for r in rows if float(r["power_w"]) == p][-1] == "unstable"
        asym = {p: col(rows, "avg_service_rate", power_w=p)[0] for p in (0.1, 0.2)}
        assert asym[0.2] > asym[0.1]
        assert all(r["gamma_s"] == "0.3" and r["beta_s"] == "0.7" for r in rows)


class TestMain:
    def test_stdout_and_file(self, tmp_path, capsys):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[sweep]\ntheta_t = 1e-4, 1e-2\n")
        out = tmp_path / "out.csv"
        assert main(["opt-rate-sweep", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        assert main(["opt-rate-sweep", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        assert main(["opt-rate-sweep", "--config", str(cfg)]) == EXIT_OK
        printed = capsys.readouterr().out
        assert printed == out.read_text()

    def test_byte_identical_and_thread_independent(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[sweep]\npowers = 0.1, 0.2\nloads = 0.5, 0.9\n[bounds]\nt_max = 2000\n")
        outs = []
        for threads in ("1", "1", "2"):
            out = tmp_path / "d.csv"
            assert main(["delay-bound-sweep", "--config", str(cfg), "--out", str(out),
                         "--threads", threads]) == EXIT_OK
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_default_grid_is_plain_numbers(self, capsys):
        assert main(["opt-rate-sweep"]) == EXIT_OK
        rows = rows_of(capsys.readouterr().out)
        assert len(rows) == 29
        assert all(float(r["theta_t"]) > 0 for r in rows)

    def test_config_error_no_output(self, tmp_path, capsys):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[sweep]\ntheta_t = oops\n")
        out = tmp_path / "never.csv"
        assert main(["opt-rate-sweep", "--config", str(cfg), "--out", str(out)]) == EXIT_CONFIG
        assert not out.exists()
        assert "line 2" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["opt-rate-sweep", "--config", str(tmp_path / "nope.ini")]) == EXIT_CONFIG

    def test_bad_seed(self):
        with pytest.raises(SystemExit):
            main(["validate", "--seed", "-3"])

    def test_validate_reports_failures(self, tmp_path, capsys):
        cfg = tmp_path / "v.ini"
        cfg.write_text("[sim]\nframes = 300000\n")
        out = tmp_path / "v.csv"
        code = main(["validate", "--config", str(cfg), "--out", str(out), "--seed", "5"])
        rows = rows_of(out.read_text())
        assert [int(r["check"]) for r in rows] == list(range(1, 11))
        assert rows[-1]["status"] == "PASS" and rows[-1]["measured"] == "q=0.0"
        failed = [r for r in rows if r["status"] == "FAIL"]
        # check 8 fails at any sample size (see the acceptance suite)
        assert code == (EXIT_VALIDATION if failed else EXIT_OK)
        assert any(r["check"] == "8" for r in failed)
