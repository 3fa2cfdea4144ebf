import json

import numpy as np
import pytest

from anfrl import envs
from anfrl.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from anfrl.config import (PRESETS, apply_overrides, build_experiment_config,
                          load_config, read_config_file)
from anfrl.errors import ConfigError

EXAMPLE = """
[run]
env = linear_tracker
algorithm = sac
mode = static_anf
total_steps = 4000
hidden_dims = 32, 32

[ene]
noise_fraction = 0.95
noise_amplitude = 2.0

[sparsity]
input_layer_sparsity = 0.75
"""


class TestConfigFiles:
    def test_full_file_parses(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text(EXAMPLE)
        cfg = load_config(str(path))
        assert cfg.env_name == "linear_tracker"
        assert cfg.algorithm == "sac"
        assert cfg.mode == "static_anf"
        assert cfg.total_steps == 4000
        assert cfg.hidden_dims == (32, 32)
        assert cfg.ene.noise_fraction == 0.95
        assert cfg.ene.noise_amplitude == 2.0
        assert cfg.input_layer_sparsity == 0.75

    def test_unknown_key_rejected_with_location(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[run]\nlearning_rate = 3e-4\n")
        with pytest.raises(ConfigError, match="run.learning_rate"):
            read_config_file(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[optimizer]\nlr = 1\n")
        with pytest.raises(ConfigError):
            read_config_file(path)

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/exp.ini")

    def test_bad_value_type(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[run]\ntotal_steps = soon\n")
        with pytest.raises(ConfigError, match="total_steps"):
            build_experiment_config(read_config_file(path))

    def test_overrides_beat_file_values(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text(EXAMPLE)
        cfg = load_config(str(path), overrides=["run.total_steps=9000",
                                                "ene.noise_fraction=0.8"])
        assert cfg.total_steps == 9000
        assert cfg.ene.noise_fraction == 0.8

    def test_override_syntax_errors(self):
        with pytest.raises(ConfigError):
            apply_overrides({}, ["run.total_steps"])
        with pytest.raises(ConfigError):
            apply_overrides({}, ["run.nope=1"])

    def test_histograms_path_loads_imitate_noise(self, tmp_path):
        rng = np.random.default_rng(0)
        hists = envs.fit_histograms(rng.normal(size=(2000, 3)), bins=8)
        hpath = tmp_path / "h.csv"
        envs.save_histograms_csv(hists, hpath)
        path = tmp_path / "exp.ini"
        path.write_text(f"[ene]\ndistribution = imitate\nhistograms_path = {hpath}\n")
        cfg = load_config(str(path))
        assert cfg.ene.distribution == "imitate"
        assert len(cfg.ene.imitate_histograms) == 3


class TestPresets:
    def test_every_preset_loads(self):
        for name in PRESETS:
            cfg = load_config(name)
            assert cfg.total_steps == 60_000

    def test_preset_with_overrides(self):
        cfg = load_config("toy_dense_sac", overrides=["run.total_steps=1000"])
        assert cfg.mode == "dense"
        assert cfg.algorithm == "sac"
        assert cfg.total_steps == 1000

    def test_pene_preset(self):
        cfg = load_config("toy_anf_td3_pene")
        assert cfg.pene_period == 15_000
        assert cfg.ene.noise_fraction == 0.95


class TestCliExitCodes:
    def test_unknown_preset_is_config_error(self, capsys):
        assert main(["train", "--config", "no_such_preset"]) == EXIT_CONFIG
        assert "error:" in capsys.readouterr().err

    def test_unknown_suite_is_config_error(self, capsys):
        assert main(["suite", "everything"]) == EXIT_CONFIG

    def test_env_info_unknown_env(self, capsys):
        assert main(["env-info", "atari_pong"]) == EXIT_CONFIG

    def test_conjecture_divergence_is_numeric_error(self, capsys):
        code = main(["conjecture", "--mu", "16", "--lr", "0.5",
                     "--steps", "2000"])
        assert code == EXIT_NUMERIC


class TestCliCommands:
    def test_env_info_single_env(self, capsys):
        assert main(["env-info", "point_mass_reach",
                     "--noise-fraction", "0.9"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "d_og: 8" in out
        assert "d_ene (noise_fraction=0.9): 80" in out

    def test_env_info_reference_table(self, capsys):
        assert main(["env-info", "--table"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "37600" in out  # humanoid at the highest noise fraction
        assert "55" in out     # hopper at the lowest

    def test_conjecture_pass_writes_trajectory(self, tmp_path, capsys):
        out_csv = tmp_path / "traj.csv"
        code = main(["conjecture", "--mu", "4", "--steps", "30000",
                     "--out", str(out_csv)])
        assert code == EXIT_OK
        assert "PASS" in capsys.readouterr().out
        lines = out_csv.read_text().splitlines()
        assert lines[0] == "step,w1,w2"
        assert len(lines) == 30_002

    def test_train_tiny_run(self, tmp_path, capsys):
        code = main(["train", "--config", "toy_anf_td3", "--seed", "1",
                     "--out", str(tmp_path),
                     "--override", "run.total_steps=600",
                     "--override", "run.initial_collect=100",
                     "--override", "run.eval_interval=200",
                     "--override", "run.eval_episodes=1",
                     "--override", "run.hidden_dims=16,16"])
        assert code == EXIT_OK
        assert (tmp_path / "metrics_seed1.csv").exists()
        assert (tmp_path / "manifest.jsonl").exists()
        assert "actor params:" in capsys.readouterr().out

    def test_analyze_aggregates_and_svg(self, tmp_path, capsys):
        for seed, r in [(0, 0.0), (1, 2.0)]:
            (tmp_path / f"m{seed}.csv").write_text(
                "step,mean_return,critic_loss,actor_loss,global_sparsity\n"
                f"100,{r},0.0,0.0,0.0\n")
        conn = tmp_path / "conn.csv"
        conn.write_text("step,relevant_mean,noise_mean,network\n"
                        "0,1.0,1.0,actor\n10,2.0,0.5,actor\n")
        out_csv = tmp_path / "agg.csv"
        svg = tmp_path / "plot.svg"
        code = main(["analyze", str(tmp_path / "m0.csv"), str(tmp_path / "m1.csv"),
                     "--out", str(out_csv), "--connectivity", str(conn),
                     "--svg", str(svg)])
        assert code == EXIT_OK
        lines = out_csv.read_text().splitlines()
        step, mean, half = lines[1].split(",")
        assert (step, mean) == ("100", "1.0")
        assert float(half) == pytest.approx(1.96, abs=1e-12)
        assert svg.read_text().startswith("<svg")

    def test_suite_json_with_stubbed_runs(self, tmp_path, capsys, monkeypatch):
        from anfrl import harness

        def fake_run(cfg, seed, out_dir=None):
            steps = [cfg.total_steps // 10 * i for i in range(1, 11)]
            return harness.MetricsLog(
                seed=seed, total_steps=cfg.total_steps, eval_steps=steps,
                eval_returns=[1.0] * 10, critic_losses=[0.0] * 10,
                actor_losses=[0.0] * 10, global_sparsities=[0.0] * 10)

        monkeypatch.setattr(harness, "run_training", fake_run)
        code = main(["suite", "static-ablation", "--seeds", "2", "--json"])
        assert code == EXIT_OK
        rows = json.loads(capsys.readouterr().out)
        assert [r["label"] for r in rows] == ["anf", "static_anf", "dense"]
        assert all(r["final_score_mean"] == 1.0 for r in rows)

    def test_help_documents_config_keys(self, capsys):
        with pytest.raises(SystemExit):
            main(["--help"])
        out = capsys.readouterr().out
        assert "ene.noise_fraction" in out
        assert "toy_anf_td3" in out
