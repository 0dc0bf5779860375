import json

import numpy as np

from ntk_influence.cli import main, parse_config_file
from ntk_influence.experiments import EXPERIMENTS
from ntk_influence.matio import read_csv_columns

SMALL = [
    "--set", "n_train=40", "--set", "n_test=5", "--set", "dim=8", "--set", "n_times=5",
]


class TestConfigParsing:
    def test_round_trip_types(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text(
            "experiment = fig3_density\n"
            "n_train = 75  # trailing comment\n"
            "lam = 2.5\n"
            "proportions = 0.8,0.2\n"
            "widths = 100,200\n"
        )
        values, diags = parse_config_file(p)
        assert diags == []
        assert values == {
            "experiment": "fig3_density",
            "n_train": 75,
            "lam": 2.5,
            "proportions": (0.8, 0.2),
            "widths": (100, 200),
        }

    def test_diagnostics_carry_line_numbers(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("experiment = fig3_density\nbogus = 1\nn_train = abc\n")
        _, diags = parse_config_file(p)
        assert any("line 2" in d and "bogus" in d for d in diags)
        assert any("line 3" in d for d in diags)

    def test_missing_file_is_diagnostic(self):
        _, diags = parse_config_file("/nope/missing.cfg")
        assert diags


class TestVerbs:
    def test_list_experiments_prints_all(self, capsys):
        assert main(["list-experiments"]) == 0
        out = capsys.readouterr().out
        for name in EXPERIMENTS:
            assert name in out

    def test_validate_echoes_normalized_config(self, tmp_path, capsys):
        p = tmp_path / "c.cfg"
        p.write_text("experiment = fig7_label_noise\nn_train = 30\n")
        assert main(["validate", "--config", str(p)]) == 0
        out = capsys.readouterr().out
        assert "n_train = 30" in out
        assert "flip_fraction = 0.4" in out  # experiment default applied

    def test_validate_rejects_bad_config(self, tmp_path, capsys):
        p = tmp_path / "c.cfg"
        p.write_text("nonsense = 3\n")
        assert main(["validate", "--config", str(p)]) == 1
        assert "nonsense" in capsys.readouterr().err

    def test_run_without_experiment_fails(self, capsys):
        assert main(["run"]) == 1
        assert "experiment" in capsys.readouterr().err

    def test_unknown_experiment_exit_one(self, capsys):
        assert main(["run", "not_an_experiment"]) == 1

    def test_bad_parameter_exit_one(self, tmp_path, capsys):
        code = main(["run", "fig3_density", "--out", str(tmp_path), "--set", "lam=-1"] + SMALL)
        assert code == 1

    def test_divergence_exit_two(self, tmp_path, capsys):
        code = main(
            [
                "run", "fig1_scatter", "--out", str(tmp_path),
                "--set", "learning_rate=1000", "--set", "width=100",
                "--set", "epochs=60", "--set", "top_k=3",
                "--set", "n_train=20", "--set", "n_test=3",
            ]
        )
        assert code == 2
        assert "DivergenceError" in capsys.readouterr().err


class TestRunOutputs:
    def test_manifest_and_results_written(self, tmp_path, capsys):
        code = main(["run", "fig4_rankings", "--out", str(tmp_path), "--seed", "5"] + SMALL)
        assert code == 0
        out_dir = tmp_path / "fig4_rankings"
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["experiment"] == "fig4_rankings"
        assert manifest["seed"] == 5
        assert "results.csv" in manifest["outputs"]
        cols = read_csv_columns(out_dir / "results.csv")
        assert list(cols) == ["test_id", "category", "rank", "train_index", "i_ntk", "i_hat"]

    def test_same_seed_is_byte_identical(self, tmp_path, capsys):
        args = ["run", "fig2_lambda_sweep", "--seed", "3"] + SMALL
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a/fig2_lambda_sweep/results.csv").read_bytes()
        b = (tmp_path / "b/fig2_lambda_sweep/results.csv").read_bytes()
        assert a == b

    def test_different_seed_changes_results(self, tmp_path, capsys):
        args = ["run", "fig2_lambda_sweep"] + SMALL
        assert main(args + ["--seed", "1", "--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--seed", "2", "--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a/fig2_lambda_sweep/results.csv").read_bytes()
        b = (tmp_path / "b/fig2_lambda_sweep/results.csv").read_bytes()
        assert a != b

    def test_threads_flag_accepted(self, tmp_path, capsys):
        code = main(
            ["run", "fig4_rankings", "--out", str(tmp_path), "--threads", "1"] + SMALL
        )
        assert code == 0

    def test_fig2_bound_below_error_per_row(self, tmp_path, capsys):
        assert main(["run", "fig2_lambda_sweep", "--out", str(tmp_path)] + SMALL) == 0
        cols = read_csv_columns(tmp_path / "fig2_lambda_sweep/results.csv")
        err = np.array([float(v) for v in cols["mean_error_rate"]])
        bound = np.array([float(v) for v in cols["mean_lower_bound"]])
        assert np.all(bound <= err + 1e-12)

    def test_config_file_plus_set_override(self, tmp_path, capsys):
        p = tmp_path / "c.cfg"
        p.write_text("experiment = fig6_tracking\nn_train = 25\nn_test = 3\nn_times = 4\ndim = 8\n")
        code = main(
            ["run", "--config", str(p), "--out", str(tmp_path), "--set", "n_times=6"]
        )
        assert code == 0
        cols = read_csv_columns(tmp_path / "fig6_tracking/results.csv")
        assert len(set(cols["time"])) == 6
