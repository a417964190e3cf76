"""Tests for configuration parsing and the command-line front end."""

import json
import os

import pytest

from kolmogorov_kam import cli
from kolmogorov_kam import fourier_taylor as ft
from kolmogorov_kam.config import config_from_dict, parse_config
from kolmogorov_kam.errors import ConfigError
from kolmogorov_kam.hamiltonians import integrable_part
from kolmogorov_kam.iteration import DEFAULT_MAX_STEPS

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")

MINIMAL = {"hamiltonian": {"preset": "pendulum"}, "omega": [1.0], "epsilon": 1e-4}


def write_config(tmp_path, data, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestConfig:
    def test_defaults(self):
        cfg = config_from_dict(MINIMAL)
        assert (cfg.K, cfg.M, cfg.kmax) == (16, 4, 200)
        assert (cfg.rho, cfg.delta) == (1.0, 1.0)
        assert cfg.tau is None and cfg.output == "out"
        assert cfg.schedule.max_steps == DEFAULT_MAX_STEPS
        assert cfg.verify.T == 100.0 and cfg.verify.dt == 1e-3

    def test_missing_omega(self):
        data = dict(MINIMAL)
        del data["omega"]
        with pytest.raises(ConfigError) as info:
            config_from_dict(data)
        assert info.value.field == "omega"

    @pytest.mark.parametrize("patch,field", [
        ({"epsilon": -1.0}, "epsilon"),
        ({"truncation": {"K": 2.5}}, "truncation.K"),
        ({"truncation": {"M": 1}}, "truncation.M"),
        ({"domain": {"rho": 0}}, "domain.rho"),
        ({"kmax": 4}, "kmax"),
        ({"tau": -0.5}, "tau"),
        ({"schedule": {"bogus": 1}}, "schedule.bogus"),
        ({"hamiltonian": {"preset": "nope"}}, "hamiltonian.preset"),
        ({"hamiltonian": {"preset": "golden2d"}}, "hamiltonian.params"),
        ({"verify": {"theta0": [1.0, 2.0]}}, "verify.theta0"),
        ({"extra": 1}, "extra"),
    ])
    def test_field_errors(self, patch, field):
        with pytest.raises(ConfigError) as info:
            config_from_dict(dict(MINIMAL, **patch))
        assert info.value.field == field

    def test_explicit_series_round_trip(self, tmp_path):
        f0 = integrable_part([1.0], [[1.0]], 8, 4)
        f1 = ft.FourierTaylorSeries.cos_mode((1,), 1.0, 8, 4)
        (tmp_path / "f1.json").write_text(json.dumps(ft.to_json(f1)))
        data = {"hamiltonian": {"f0": ft.to_json(f0), "f1": "f1.json"}, "omega": [1.0],
                "epsilon": 1e-4, "truncation": {"K": 8, "M": 4}}
        cfg = parse_config(write_config(tmp_path, data))
        again = config_from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again.to_dict() == cfg.to_dict()
        assert again.f1.terms() == f1.terms()

    def test_shipped_configs_parse(self):
        for name in ("pendulum.json", "golden2d.json", "resonant.json"):
            parse_config(os.path.join(CONFIGS, name))

    def test_overrides(self):
        cfg = config_from_dict(MINIMAL).with_overrides(max_steps=3, stop_tol=0.0, seed=7)
        assert cfg.schedule.max_steps == 3 and cfg.schedule.stop_tol == 0.0
        assert cfg.verify.seed == 7


class TestSolve:
    def test_zero_epsilon(self, tmp_path, capsys):
        path = write_config(tmp_path, dict(MINIMAL, epsilon=0.0))
        code, out, _ = run_cli(capsys, "solve", "--config", path, "--out", str(tmp_path / "o"))
        assert code == cli.EXIT_OK
        assert json.loads(out)["steps"] == 0

    def test_resonant(self, tmp_path, capsys):
        path = os.path.join(CONFIGS, "resonant.json")
        code, _, err = run_cli(capsys, "solve", "--config", path, "--out", str(tmp_path / "o"))
        assert code == cli.EXIT_ERROR
        payload = json.loads(err)
        assert payload["error"] == "resonant" and payload["k"] == [1, -1]

    def test_singular_hessian(self, tmp_path, capsys):
        data = dict(MINIMAL, hamiltonian={"preset": "pendulum", "params": {"hessian": 0.0}})
        code, _, err = run_cli(capsys, "solve", "--config", write_config(tmp_path, data),
                               "--out", str(tmp_path / "o"))
        assert code == cli.EXIT_ERROR
        assert json.loads(err)["error"] == "twist"

    def test_missing_omega(self, tmp_path, capsys):
        data = dict(MINIMAL)
        del data["omega"]
        code, _, err = run_cli(capsys, "solve", "--config", write_config(tmp_path, data))
        assert code == cli.EXIT_CONFIG
        payload = json.loads(err)
        assert payload["error"] == "config" and payload["field"] == "omega"

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "solve", "--config", str(tmp_path / "none.json"))
        assert code == cli.EXIT_CONFIG
        assert json.loads(err)["error"] == "config"

    def test_pendulum_reports_and_determinism(self, tmp_path, capsys):
        path = os.path.join(CONFIGS, "pendulum.json")
        outs = []
        for name in ("a", "b"):
            out_dir = tmp_path / name
            code, _, _ = run_cli(capsys, "solve", "--config", path, "--out", str(out_dir))
            assert code == cli.EXIT_OK
            outs.append(out_dir)
        a = (outs[0] / "iterations.csv").read_bytes()
        assert a == (outs[1] / "iterations.csv").read_bytes()
        assert a.splitlines()[0] == b"n,delta_n,eps_n,eps_hat_n,gamma_n,eta_n,ms"
        report = json.loads((outs[0] / "report.json").read_text())
        assert report["passed"] and report["converged"]
        for key in ("freq_err", "angle_dep_err", "flow_dist", "sympl_defect"):
            assert report["verification"][key] < cli.THRESHOLDS[key]
        for name in ("map.json", "eps.csv", "flow.csv", "plot.gp"):
            assert (outs[0] / name).exists()

        code, out, _ = run_cli(capsys, "verify", "--run", str(outs[0] / "report.json"))
        assert code == cli.EXIT_OK
        assert json.loads(out)["passed"]

    def test_timing_fills_ms(self, tmp_path, capsys):
        path = os.path.join(CONFIGS, "pendulum.json")
        run_cli(capsys, "solve", "--config", path, "--out", str(tmp_path), "--timing",
                "--max-steps", "1")
        rows = (tmp_path / "iterations.csv").read_text().splitlines()
        assert rows[-1].split(",")[-1] != ""


class TestOtherCommands:
    def test_diophantine(self, capsys):
        code, out, _ = run_cli(capsys, "diophantine", "--omega", "1", "1.618033988749895",
                               "--tau", "1")
        assert code == cli.EXIT_OK
        payload = json.loads(out)
        assert payload["k_star"] == [1, -1]
        assert payload["c_hat"] == pytest.approx(0.6180339887498949, rel=1e-12)

    def test_selftest(self, capsys):
        code, out, _ = run_cli(capsys, "cohomology-selftest", "--count", "10")
        assert code == cli.EXIT_OK
        assert json.loads(out)["passed"]

    def test_sweep(self, tmp_path, capsys):
        path = os.path.join(CONFIGS, "pendulum.json")
        code, out, _ = run_cli(capsys, "sweep", "--config", path, "--eps", "1e-5", "1e-4", "0.5",
                               "--out", str(tmp_path))
        assert code == cli.EXIT_OK
        payload = json.loads(out)
        assert [r["converged"] for r in payload["runs"]] == [True, True, False]
        assert payload["empirical_boundary"] == pytest.approx(1e-4)
        assert payload["kappa"] > 0
        assert (tmp_path / "sweep.json").exists()

    def test_bad_arguments(self, capsys):
        with pytest.raises(SystemExit) as info:
            cli.main(["solve"])
        assert info.value.code == 2
