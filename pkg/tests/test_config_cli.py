import os

import numpy as np
import pytest

from sfrbsde.cli import main
from sfrbsde.config import (
    ExperimentConfig,
    config_from_mapping,
    parse_coefficient,
    parse_config,
)
from sfrbsde.errors import ConfigError


def write_cfg(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestParseConfig:
    def test_minimal_file_gets_defaults(self, tmp_path):
        path = write_cfg(tmp_path, "h = 0.75\nt_horizon = 1.0\n")
        cfg = parse_config(path)
        assert cfg.h == 0.75
        assert cfg.n_time == 256
        assert cfg.eps_list == (0.5, 0.35, 0.25, 0.18, 0.125)
        assert cfg.generator == "benchmark"

    def test_comments_and_blanks_ignored(self, tmp_path):
        path = write_cfg(tmp_path, "# leading comment\n\nh = 0.8  # trailing\n")
        assert parse_config(path).h == 0.8

    def test_h_boundary_rejected(self, tmp_path):
        path = write_cfg(tmp_path, "h = 0.5\n")
        with pytest.raises(ConfigError) as err:
            parse_config(path)
        assert any("H must lie in (0.5, 1)" in v for v in err.value.violations)

    def test_beta_side_condition(self, tmp_path):
        # beta >= 1/(2H) = 2/3 for H = 0.75
        path = write_cfg(tmp_path, "h = 0.75\nbeta = 0.7\n")
        with pytest.raises(ConfigError) as err:
            parse_config(path)
        assert any("1/(2H)" in v for v in err.value.violations)

    def test_unknown_key_named(self, tmp_path):
        path = write_cfg(tmp_path, "hh = 0.75\n")
        with pytest.raises(ConfigError) as err:
            parse_config(path)
        assert any("'hh'" in v for v in err.value.violations)

    def test_all_violations_reported(self, tmp_path):
        path = write_cfg(tmp_path, "h = 0.4\nbeta = 2.0\nn_paths = 10\nmystery = 1\n")
        with pytest.raises(ConfigError) as err:
            parse_config(path)
        text = "\n".join(err.value.violations)
        assert "H must lie" in text
        assert "beta" in text
        assert "n_paths" in text
        assert "mystery" in text

    def test_eps_list_ordering(self, tmp_path):
        path = write_cfg(tmp_path, "eps_list = 0.2,0.5\n")
        with pytest.raises(ConfigError) as err:
            parse_config(path)
        assert any("strictly decreasing" in v for v in err.value.violations)

    def test_duplicate_key(self, tmp_path):
        path = write_cfg(tmp_path, "h = 0.6\nh = 0.7\n")
        with pytest.raises(ConfigError) as err:
            parse_config(path)
        assert any("duplicate" in v for v in err.value.violations)

    def test_roundtrip(self, tmp_path):
        cfg = ExperimentConfig(h=0.8, n_time=128, eps_list=(0.4, 0.2), seed=7,
                               generator="linear_y:0.2", sigma2="sinusoidal:1.5")
        path = write_cfg(tmp_path, cfg.to_text())
        assert parse_config(path) == cfg

    def test_hash_stable_and_sensitive(self):
        a = ExperimentConfig()
        b = ExperimentConfig(seed=43)
        assert a.config_hash() == ExperimentConfig().config_hash()
        assert a.config_hash() != b.config_hash()

    def test_coefficient_presets(self):
        t = np.array([0.0, 0.5, 1.0])
        assert np.allclose(parse_coefficient("constant:2.5", 1.0)(t), 2.5)
        assert np.allclose(parse_coefficient("linear:2.0", 1.0)(t), 2.0 * t)
        sin_fn = parse_coefficient("sinusoidal:1.0", 1.0)
        assert np.all(sin_fn(t) > 0)
        with pytest.raises(ConfigError):
            parse_coefficient("fourier:1", 1.0)

    def test_generator_presets(self):
        cfg = config_from_mapping({"generator": "linear_y:0.3"})
        gen = cfg.make_generator()
        assert gen(0.0, 0.0, np.array([2.0]), 0.0, 0.0)[0] == pytest.approx(0.6)
        with pytest.raises(ConfigError):
            config_from_mapping({"generator": "mystery"})


SMALL = """
h = 0.75
t_horizon = 1.0
n_time = 48
n_space = 64
n_paths = 1000
eps_list = 0.5,0.3,0.2
t0 = 0.75
seed = 42
"""


class TestCli:
    def test_usage_error_exit_2(self, tmp_path, capsys):
        path = write_cfg(tmp_path, "h = 0.3\n")
        rc = main(["sweep", "--config", path])
        assert rc == 2
        assert "H must lie" in capsys.readouterr().err

    def test_missing_config_exit_2(self, tmp_path):
        assert main(["sweep", "--config", str(tmp_path / "absent.cfg")]) == 2

    def test_simulate_fbm_outputs(self, tmp_path):
        path = write_cfg(tmp_path, SMALL + f"out_dir = {tmp_path / 'out'}\n")
        assert main(["simulate-fbm", "--config", path]) == 0
        out = tmp_path / "out"
        for name in ("paths.csv", "covariance_check.csv", "manifest.csv"):
            assert (out / name).exists()
        manifest = (out / "manifest.csv").read_text()
        assert "paths.csv" in manifest and "covariance_check.csv" in manifest
        header = (out / "paths.csv").read_text().splitlines()[0]
        assert header == "path_id,t,B,BH,eta"

    def test_solve_outputs(self, tmp_path):
        path = write_cfg(tmp_path, SMALL + f"out_dir = {tmp_path / 'out'}\n")
        assert main(["solve", "--config", path]) == 0
        out = tmp_path / "out"
        for name in ("psi.csv", "triple_summary.csv", "residual_check.csv"):
            assert (out / name).exists()

    def test_sweep_outputs_and_exit(self, tmp_path):
        path = write_cfg(tmp_path, SMALL + f"out_dir = {tmp_path / 'out'}\n")
        assert main(["sweep", "--config", path]) == 0
        out = tmp_path / "out"
        report = (out / "sweep_report.csv").read_text().splitlines()
        assert report[0] == ("epsilon,t_lo,sup_mse,sup_mse_stderr,z_err_integral,"
                             "z_err_stderr,exceed_prob,exceed_stderr,c4_bound,"
                             "lemma1_lhs,lemma1_rhs,pass_lemma1,pass_theorem,"
                             "pass_chebyshev")
        assert len(report) == 4
        constants = (out / "constants.csv").read_text()
        for name in ("L,", "C0,", "C1,", "alpha0[eps=0.5]", "C4[eps=0.2]"):
            assert name in constants
        assert "PASS" in (out / "summary.txt").read_text()

    def test_seed_override_changes_hash(self, tmp_path):
        path = write_cfg(tmp_path, SMALL + f"out_dir = {tmp_path / 'a'}\n")
        assert main(["simulate-fbm", "--config", path, "--seed", "7"]) == 0
        manifest = (tmp_path / "a" / "manifest.csv").read_text()
        assert "seed,7" in manifest

    def test_out_dir_env_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SFRBSDE_OUT", str(tmp_path / "envout"))
        cfg = ExperimentConfig()
        assert cfg.resolved_out_dir() == str(tmp_path / "envout")

    def test_expect_fail_negative_control(self, tmp_path):
        path = write_cfg(tmp_path, SMALL + f"out_dir = {tmp_path / 'out'}\n")
        assert main(["verify", "--config", path, "--expect-fail", "lemma1-null"]) == 0

    def test_expect_fail_unknown_name(self, tmp_path, capsys):
        path = write_cfg(tmp_path, SMALL + f"out_dir = {tmp_path / 'out'}\n")
        rc = main(["verify", "--config", path, "--expect-fail", "no-such-check"])
        assert rc == 2
        assert "unknown negative control" in capsys.readouterr().err

    def test_manifest_lists_every_output(self, tmp_path):
        path = write_cfg(tmp_path, SMALL + f"out_dir = {tmp_path / 'out'}\n")
        main(["sweep", "--config", path])
        out = tmp_path / "out"
        manifest = (out / "manifest.csv").read_text()
        written = {p.name for p in out.iterdir()} - {"manifest.csv"}
        for name in written:
            assert name in manifest
