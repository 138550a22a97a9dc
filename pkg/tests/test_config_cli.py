import csv
import json

import numpy as np
import pytest

from douglab import cli, config
from douglab.errors import ConfigError


def _cfg(**over):
    c = {
        "problem": {
            "operator": {"kind": "linear", "jacobian": [[-1, 0.2], [0, -1.5]]},
            "noise": {"additive": "gaussian", "sigma_b": [[1, 0], [0, 1]]},
        },
        "schedule": {"alpha": 0.1, "K": 1, "xi": 0.5},
        "x0": [1, -1],
        "horizon": 200,
        "replicas": 200,
        "seed": 3,
    }
    c.update(over)
    return c


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


class TestConfig:
    def test_defaults_and_roundtrip(self):
        c = config.normalize(_cfg())
        assert c["process"] == "sa" and c["bounds"]["C2"] == 2.0
        text = config.emit(c)
        assert config.emit(config.parse(text)) == text

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            config.normalize(_cfg(bogus=1))

    def test_missing_operator_field(self):
        c = _cfg()
        c["problem"]["operator"] = {"kind": "saturating_power", "jacobian": [[-1.0]]}
        with pytest.raises(ConfigError):
            config.normalize(c)

    def test_build_objects(self):
        c = config.normalize(_cfg())
        p = config.build_problem(c)
        assert p.dim == 2
        assert config.build_schedule(c).xi == 0.5
        assert config.build_plan(c).horizon == 200

    def test_large_first_step_rejected(self):
        c = config.normalize(_cfg(schedule={"alpha": 3.0, "K": 1, "xi": 0.0}))
        with pytest.raises(ConfigError):
            config.build_schedule(c)


class TestCli:
    def test_simulate_outputs(self, tmp_path):
        out = tmp_path / "o"
        assert cli.main(["simulate", "--config", _write(tmp_path, _cfg()), "--out", str(out)]) == 0
        rows = list(csv.reader(open(out / "trajectory.csv")))
        assert rows[0][:3] == ["k", "alpha_k", "mean_0"]
        assert (out / "batch.bin").exists() and (out / "config.json").exists()

    def test_noiseless_mse(self, tmp_path):
        c = _cfg(schedule={"alpha": 0.5, "K": 1, "xi": 0.0}, x0=[1.0],
                 checkpoints={"indices": [1, 2, 3, 4, 5]}, replicas=3)
        c["problem"] = {"operator": {"kind": "linear", "jacobian": [[-1.0]]},
                        "noise": {"additive": "gaussian", "sigma_b": [[0.0]]}}
        out = tmp_path / "o"
        assert cli.main(["simulate", "--config", _write(tmp_path, c), "--out", str(out)]) == 0
        rows = list(csv.DictReader(open(out / "trajectory.csv")))
        mse = np.array([float(r["mse"]) for r in rows])
        np.testing.assert_allclose(mse, 0.25 ** np.arange(1, 6), rtol=1e-12)

    def test_thread_count_does_not_change_output(self, tmp_path):
        path = _write(tmp_path, _cfg())
        for t in ("1", "2"):
            assert cli.main(["w1", "--config", path, "--out", str(tmp_path / t), "--threads", t]) == 0
        assert (tmp_path / "1" / "w1.csv").read_bytes() == (tmp_path / "2" / "w1.csv").read_bytes()

    def test_config_error_exit(self, tmp_path):
        assert cli.main(["simulate", "--config", _write(tmp_path, {"schedule": {}})]) == cli.EXIT_CONFIG
        assert cli.main(["simulate", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG
        assert cli.main(["simulate"]) == cli.EXIT_CONFIG

    def test_divergence_exit(self, tmp_path):
        c = _cfg(x0=[3.0], schedule={"alpha": 0.5, "K": 1, "xi": 0.0}, horizon=10000, replicas=50)
        c["problem"] = {"operator": {"kind": "saturating_power", "jacobian": [[-1.0]], "R1": 5.0, "delta": 1.0},
                        "noise": {"additive": "gaussian", "sigma_b": [[1.0]]},
                        "certificate": {"P": [[1.0]]}}
        assert cli.main(["simulate", "--config", _write(tmp_path, c), "--out", str(tmp_path / "o")]) == cli.EXIT_DIVERGED

    def test_bounds_linear_has_no_nonlinear_terms(self, tmp_path):
        c = _cfg(schedule={"alpha": 0.05, "K": 1, "xi": 0.0})
        out = tmp_path / "o"
        assert cli.main(["bounds", "--config", _write(tmp_path, c), "--out", str(out)]) == 0
        rep = json.load(open(out / "bounds.json"))
        for cp in rep["checkpoints"]:
            terms = {t["label"]: t["value"] for t in cp["sa_w1"]["terms"]}
            assert terms["rho_nonlinear"] == 0.0

    def test_bounds_flags_inadmissible(self, tmp_path):
        c = _cfg(schedule={"alpha": 1.0, "K": 1, "xi": 0.0})
        out = tmp_path / "o"
        assert cli.main(["bounds", "--config", _write(tmp_path, c), "--out", str(out)]) == 0
        assert json.load(open(out / "bounds.json"))["hypotheses_ok"] is False

    def test_tails_and_clt(self, tmp_path):
        c = _cfg(schedule={"alpha": 0.1, "K": 1, "xi": 0.0}, clt={"alpha_grid": [0.2, 0.1, 0.05]})
        path = _write(tmp_path, c)
        assert cli.main(["tails", "--config", path, "--out", str(tmp_path / "t")]) == 0
        assert cli.main(["clt", "--config", path, "--out", str(tmp_path / "c")]) == 0
        assert any((tmp_path / "t").iterdir()) and any((tmp_path / "c").iterdir())

    def test_rates_reports_insufficient_data(self, tmp_path):
        c = _cfg(horizon=8, checkpoints={"indices": [1, 2, 4, 8]})
        assert cli.main(["rates", "--config", _write(tmp_path, c), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG


class TestFitRate:
    def test_power_law(self):
        from douglab.analysis import fit_rate
        ks = np.logspace(3, 6, 20)
        fit = fit_rate(ks, 0, 3.0 / np.sqrt(ks))
        assert fit.slope == pytest.approx(-0.5, abs=1e-6)

    def test_log_correction(self):
        from douglab.analysis import fit_rate
        ks = np.logspace(3, 6, 20)
        fit = fit_rate(ks, 0, np.log(ks) / np.sqrt(ks), window=(1000, 10 ** 6))
        assert -0.5 < fit.slope < -0.35

    def test_constant(self):
        from douglab.analysis import fit_rate
        ks = np.logspace(3, 6, 20)
        assert fit_rate(ks, 0, np.full(20, 2.0)).slope == pytest.approx(0.0, abs=1e-12)
