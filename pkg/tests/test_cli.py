import json
import math
from pathlib import Path

import numpy as np
import pytest

from fwexit.cli import (
    ConfigError,
    ExperimentConfig,
    ExperimentFailure,
    main,
    parse_experiment_config,
    run_experiment,
)
from fwexit.model import builtin_spec


def base_config(kind="exit-mc", **params):
    defaults = {
        "exit-mc": {"dt": 0.001, "epsilon": 0.5, "t_max": 200.0, "n_paths": 50},
        "simulate": {"dt": 0.001, "epsilon": 0.5, "t_max": 1.0},
        "fw-scaling": {"dt": 0.001, "epsilons": [0.5, 0.4, 0.33],
                       "n_paths": 60, "t_max": 200.0},
        "quasipotential": {"targets": [[0.3], "boundary"], "T": 6.0, "dt": 0.01},
        "operator-norms": {"t_list": [1.0, 0.1, 0.01]},
        "validate-hypotheses": {"samples": 100},
    }[kind].copy()
    defaults.update(params)
    return {
        "kind": kind,
        "model": {"builtin": "ou"},
        "params": defaults,
        "seed": 3,
        "threads": 1,
        "output_dir": "out",
    }


class TestConfigValidation:
    def test_round_trip(self):
        cfg = parse_experiment_config(base_config())
        again = parse_experiment_config(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg

    def test_unknown_top_level_key(self):
        doc = base_config()
        doc["extra"] = 1
        with pytest.raises(ConfigError, match="unknown config keys"):
            parse_experiment_config(doc)

    def test_unknown_param_key(self):
        doc = base_config()
        doc["params"]["bogus"] = 1
        with pytest.raises(ConfigError, match="unknown params"):
            parse_experiment_config(doc)

    def test_unknown_kind(self):
        doc = base_config()
        doc["kind"] = "explode"
        with pytest.raises(ConfigError, match="kind"):
            parse_experiment_config(doc)

    def test_single_epsilon_scaling_rejected(self):
        doc = base_config("fw-scaling", epsilons=[0.5])
        with pytest.raises(ConfigError, match="at least 3"):
            parse_experiment_config(doc)

    def test_increasing_epsilons_rejected(self):
        doc = base_config("fw-scaling", epsilons=[0.3, 0.4, 0.5])
        with pytest.raises(ConfigError, match="decreasing"):
            parse_experiment_config(doc)

    def test_bad_model_is_config_error(self):
        doc = base_config()
        doc["model"] = {"builtin": "ou", "domain_radius": -1}
        with pytest.raises(ConfigError):
            parse_experiment_config(doc)


class TestCommands:
    def test_simulate_writes_trajectory(self, tmp_path):
        cfg = parse_experiment_config(base_config("simulate"))
        code, summary = run_experiment(cfg, tmp_path)
        assert code == 0
        lines = (tmp_path / "trajectory.csv").read_text().splitlines()
        assert lines[0] == "time,c1"
        assert len(lines) >= 3
        assert (tmp_path / "summary.json").exists()

    def test_exit_mc_outputs(self, tmp_path):
        cfg = parse_experiment_config(base_config())
        code, summary = run_experiment(cfg, tmp_path)
        assert code == 0
        lines = (tmp_path / "paths.csv").read_text().splitlines()
        assert lines[0] == "path_id,exit_time,censored,exit_c1"
        assert len(lines) == 51
        assert summary["stats"]["censor_frac"] == 0.0
        # round-trippable floats
        val = float(lines[1].split(",")[1])
        assert repr(val) == lines[1].split(",")[1]

    def test_exit_mc_byte_identical_across_threads(self, tmp_path):
        doc = base_config()
        for threads, sub in ((1, "a"), (4, "b")):
            doc["threads"] = threads
            cfg = parse_experiment_config(doc)
            run_experiment(cfg, tmp_path / sub)
        assert (tmp_path / "a" / "paths.csv").read_bytes() == \
            (tmp_path / "b" / "paths.csv").read_bytes()

    def test_seed_changes_output(self, tmp_path):
        doc = base_config()
        cfg1 = parse_experiment_config(doc)
        doc2 = dict(doc, seed=4)
        cfg2 = parse_experiment_config(doc2)
        run_experiment(cfg1, tmp_path / "a")
        run_experiment(cfg2, tmp_path / "b")
        assert (tmp_path / "a" / "paths.csv").read_bytes() != \
            (tmp_path / "b" / "paths.csv").read_bytes()

    def test_fw_scaling_summary(self, tmp_path):
        cfg = parse_experiment_config(base_config("fw-scaling"))
        code, summary = run_experiment(cfg, tmp_path)
        assert code == 0
        assert summary["v_hat"] == pytest.approx(1.0)
        assert summary["v_hat_source"] == "gramian"
        assert 0.5 < summary["slope"] < 1.5
        header = (tmp_path / "scaling.csv").read_text().splitlines()[0]
        assert header == "epsilon,mean_exit_time,stderr,eps_log_mean,censor_frac,excluded"

    def test_fw_scaling_warns_deep_regime_and_degrades(self, tmp_path, capsys):
        # V_hat/eps > 8 is flagged up front; with every sweep censored the
        # experiment reports failure instead of fitting nothing
        doc = base_config("fw-scaling", epsilons=[0.12, 0.11, 0.1],
                          n_paths=5, t_max=0.05)
        cfg = parse_experiment_config(doc)
        with pytest.raises(ExperimentFailure, match="nothing to fit"):
            run_experiment(cfg, tmp_path)
        assert "outside its feasible regime" in capsys.readouterr().err

    def test_quasipotential_outputs(self, tmp_path):
        cfg = parse_experiment_config(base_config("quasipotential"))
        code, summary = run_experiment(cfg, tmp_path)
        assert code == 0
        res = summary["results"]
        assert res[0]["closed_form"] == pytest.approx(0.09)
        assert res[0]["value"] == pytest.approx(0.09, rel=0.02)
        assert res[1]["target"] == "boundary"
        assert (tmp_path / "control_point_0.csv").read_text().splitlines()[0] == "t,psi_1"

    def test_operator_norms_outputs(self, tmp_path):
        cfg = parse_experiment_config(base_config("operator-norms"))
        code, summary = run_experiment(cfg, tmp_path)
        assert code == 0
        assert summary["report"]["passed"]
        header = (tmp_path / "operator_norms.csv").read_text().splitlines()[0]
        assert header.startswith("t,norm,sigma_1")
        assert "singular_value_drops" in summary

    def test_validate_passes_on_ou(self, tmp_path):
        cfg = parse_experiment_config(base_config("validate-hypotheses"))
        code, summary = run_experiment(cfg, tmp_path)
        assert code == 0
        assert summary["all_passed"]

    def test_exit_place_empty_region_confirms_trivially(self, tmp_path):
        # a cap no exit can land in gives zero fractions at every epsilon
        doc = {
            "kind": "exit-place",
            "model": {"builtin": "heat2"},
            "params": {"dt": 0.001, "epsilons": [0.5, 0.4], "n_paths": 150,
                       "t_max": 100.0, "cap_halfwidth": 1e-9},
            "seed": 2, "threads": 1, "output_dir": "out",
        }
        cfg = parse_experiment_config(doc)
        code, summary = run_experiment(cfg, tmp_path)
        assert code == 0
        assert summary["fractions"] == [0.0, 0.0]
        assert summary["verdict"] == "confirmed"

    def test_exit_place_needs_two_modes(self, tmp_path):
        doc = {
            "kind": "exit-place",
            "model": {"builtin": "ou"},
            "params": {"dt": 0.001, "epsilons": [0.5, 0.4], "n_paths": 10,
                       "t_max": 10.0, "cap_halfwidth": 0.1},
            "seed": 2, "threads": 1, "output_dir": "out",
        }
        cfg = parse_experiment_config(doc)
        with pytest.raises(ConfigError, match="two modes"):
            run_experiment(cfg, tmp_path)

    def test_validate_flags_stagnation_model(self, tmp_path):
        doc = base_config("validate-hypotheses")
        doc["model"] = {"builtin": "stagnation", "mode_count": 32}
        doc["params"] = {"samples": 50}
        cfg = parse_experiment_config(doc)
        code, summary = run_experiment(cfg, tmp_path)
        assert code == 1
        assert not summary["verdicts"]["operator_norm_decay"]["passed"]
        assert summary["verdicts"]["operator_norm_decay"]["stagnation"]
        assert not summary["verdicts"]["noise_summability"]["passed"]

    def test_validate_fails_on_wrong_sign_cubic(self, tmp_path):
        doc = base_config("validate-hypotheses")
        doc["model"] = {"builtin": "heat_cubic", "mode_count": 4,
                        "f_kind": "anticubic"}
        doc["params"] = {"samples": 200}
        cfg = parse_experiment_config(doc)
        with np.errstate(over="ignore", invalid="ignore"):
            code, summary = run_experiment(cfg, tmp_path)
        assert code == 1
        diss = summary["verdicts"]["drift_dissipativity"]
        assert not diss["passed"]
        assert diss["witness"] is not None


class TestMain:
    def _write(self, tmp_path, doc):
        p = tmp_path / "config.json"
        p.write_text(json.dumps(doc))
        return str(p)

    def test_exit_code_zero(self, tmp_path):
        doc = base_config()
        doc["output_dir"] = str(tmp_path / "out")
        assert main(["exit-mc", "--config", self._write(tmp_path, doc)]) == 0

    def test_config_error_is_exit_two(self, tmp_path):
        doc = base_config()
        doc["params"]["bogus"] = 1
        assert main(["exit-mc", "--config", self._write(tmp_path, doc)]) == 2

    def test_kind_mismatch_is_exit_two(self, tmp_path):
        doc = base_config()
        assert main(["simulate", "--config", self._write(tmp_path, doc)]) == 2

    def test_missing_file_is_exit_two(self, tmp_path):
        assert main(["exit-mc", "--config", str(tmp_path / "nope.json")]) == 2

    def test_out_and_seed_overrides(self, tmp_path):
        doc = base_config()
        path = self._write(tmp_path, doc)
        out = tmp_path / "elsewhere"
        assert main(["exit-mc", "--config", path, "--out", str(out),
                     "--seed", "9"]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["seed"] == 9
