import csv
import hashlib
import json

import pytest

import roma_sim.cli as cli
from roma_sim.cli import main, parse_config_text, read_results_csv, resolve_jobs, run
from roma_sim.exceptions import ConfigError
from roma_sim.optimizer import SolverConfig
from roma_sim.scenario import Scenario, dbm_to_watts

SMALL = {
    "users": 1,
    "bs_grid": [2, 2],
    "user_grid": [2, 2],
    "paths": 4,
    "opt_draws": 4,
    "eval_draws": 8,
    "max_outer_iterations": 3,
    "architectures": ["MA", "FPA"],
    "a_values_over_lambda": [0.5, 1.0],
    "p_values_dbm": [20.0, 30.0],
    "seeds": 2,
}


def write_config(tmp_path, data=SMALL, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=2))
    return path


def rows_of(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_empty_gives_defaults(self):
        cfg = parse_config_text("{}")
        assert cfg.scenario == Scenario()
        assert cfg.solver == SolverConfig()
        assert cfg.run == cli.RUN_DEFAULTS

    def test_blank_file_gives_defaults(self):
        assert parse_config_text("  \n").scenario == Scenario()

    def test_power_unit(self):
        cfg = parse_config_text('{"p_dbm": 30}')
        assert dbm_to_watts(cfg.scenario.p_dbm) == pytest.approx(1.0)

    def test_misspelled_key_names_line(self):
        with pytest.raises(ConfigError, match=r":3: unknown key 'p_dBm'"):
            parse_config_text('{\n  "users": 2,\n  "p_dBm": 30\n}', "cfg.json")

    def test_misspelled_region_key(self):
        with pytest.raises(ConfigError, match="regionn_a"):
            parse_config_text('{"regionn_a": 2.5}')

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text('{"users": 2, "users": 3}')

    def test_syntax_error_position(self):
        with pytest.raises(ConfigError, match=r"cfg.json:2:"):
            parse_config_text('{\n  "users": ,\n}', "cfg.json")

    @pytest.mark.parametrize(
        "text",
        ['{"users": 0}', '{"seeds": 0}', '{"seeds": true}', '{"architectures": ["XX"]}',
         '{"p_values_dbm": []}', '{"rho_growth": 0.5}', '{"de_population": 2}', "[1, 2]"],
    )
    def test_invalid_values(self, text):
        with pytest.raises(ConfigError):
            parse_config_text(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            cli.parse_config(tmp_path / "nope.json")


class TestJobs:
    def test_environment_overrides(self):
        assert resolve_jobs(1, {"ROMA_SIM_JOBS": "3"}) == 3
        assert resolve_jobs(2, {}) == 2

    @pytest.mark.parametrize("env", [{"ROMA_SIM_JOBS": "x"}, {"ROMA_SIM_JOBS": "0"}])
    def test_invalid(self, env):
        with pytest.raises(ConfigError):
            resolve_jobs(1, env)


class TestRun:
    def test_single(self, tmp_path):
        cfg = write_config(tmp_path, {**SMALL, "architecture": "FPA", "seed": 4})
        assert main(["single", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
        rows = rows_of(tmp_path / "out" / "results.csv")
        assert len(rows) == 1
        assert rows[0]["architecture"] == "FPA" and rows[0]["seed"] == "4"
        assert rows[0]["wall_ms"] == ""

    def test_region_sweep_outputs(self, tmp_path):
        out = tmp_path / "out"
        assert main(["region-sweep", "--config", str(write_config(tmp_path)), "--out", str(out)]) == 0
        rows = rows_of(out / "results.csv")
        assert len(rows) == 2 * 2 * 2
        fpa = {r["avg_se_bps_hz"] for r in rows if r["architecture"] == "FPA" and r["seed"] == "0"}
        assert len(fpa) == 1
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["files"]) == {"results.csv", "timings.csv", "fig3_FPA.dat", "fig3_MA.dat"}
        for name, digest in manifest["files"].items():
            assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
        lines = (out / "fig3_MA.dat").read_text().splitlines()
        assert [float(l.split()[0]) for l in lines] == [0.5, 1.0]

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path)
        for name in ("a", "b"):
            assert main(["power-sweep", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
        for name in ("results.csv", "fig4_MA.dat", "fig4_FPA.dat"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_jobs_env_gives_same_rows(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path)
        assert main(["region-sweep", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
        monkeypatch.setenv("ROMA_SIM_JOBS", "2")
        assert main(["region-sweep", "--config", str(cfg), "--out", str(tmp_path / "b"), "--jobs", "1"]) == 0
        assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()

    def test_seeds_flag_overrides(self, tmp_path):
        cfg = write_config(tmp_path)
        run("region-sweep", cfg, tmp_path / "out", seeds=1)
        assert {r["seed"] for r in rows_of(tmp_path / "out" / "results.csv")} == {"0"}

    def test_wall_time_opt_in(self, tmp_path):
        cfg = write_config(tmp_path, {**SMALL, "architecture": "FPA", "record_wall_time": True})
        run("single", cfg, tmp_path / "out")
        assert float(rows_of(tmp_path / "out" / "results.csv")[0]["wall_ms"]) > 0

    def test_resume_after_interruption(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        first = run("region-sweep", cfg, out)
        (out / "manifest.json").unlink()  # simulate a run killed before finishing
        import roma_sim.experiments as ex

        monkeypatch.setattr(ex, "_architecture_task", lambda task: pytest.fail("completed seed rerun"))
        again = run("region-sweep", cfg, out)
        assert [r.key for r in again] == [r.key for r in first]
        assert (out / "manifest.json").exists()
        assert len(read_results_csv(out / "results.csv")) == len(first)

    def test_trace_outputs(self, tmp_path):
        cfg = write_config(tmp_path, {**SMALL, "seeds": 1, "de_population": 6})
        assert main(["trace", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
        names = set(json.loads((tmp_path / "out" / "manifest.json").read_text())["files"])
        assert {"fig2_AO-p20dBm.dat", "fig2_DE-p30dBm.dat"} <= names


class TestExitCodes:
    def test_config_error(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"p_dBm": 30})
        assert main(["single", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "p_dBm" in capsys.readouterr().err

    def test_infeasible(self, tmp_path):
        cfg = write_config(tmp_path, {**SMALL, "bs_grid": [3, 3], "a_over_lambda": 0.2,
                                      "d_over_lambda": 0.5})
        assert main(["single", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3

    def test_bad_seeds_flag(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["single", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seeds", "0"]) == 2

    def test_unknown_command(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["fly", "--config", "x", "--out", "y"])
        assert exc.value.code == 2
