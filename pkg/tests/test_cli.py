import json

import pandas as pd
import pytest

import app


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthetic")
    code = app.main(["synth", "--out", str(root), "--users", "2", "--sessions", "1", "--duration", "60",
                     "--sensor", "ACC"])
    assert code == app.EXIT_OK
    return root


@pytest.fixture(scope="module")
def feature_csv(dataset, tmp_path_factory):
    path = tmp_path_factory.mktemp("features") / "features.csv"
    assert app.main(["extract", "--dataset", str(dataset), "--window", "50", "--out", str(path)]) == app.EXIT_OK
    return path


def _small_run(output_dir, *extra):
    return ["evaluate", "--preset", "quick", "--duration", "10", "--output-dir", str(output_dir), *extra]


def test_synth_needs_two_users(tmp_path):
    assert app.main(["synth", "--out", str(tmp_path / "d"), "--users", "1"]) == app.EXIT_USAGE


def test_unknown_command():
    assert app.main(["transmogrify"]) == app.EXIT_USAGE


def test_extract_missing_dataset(tmp_path):
    code = app.main(["extract", "--dataset", str(tmp_path / "absent"), "--out", str(tmp_path / "f.csv")])

    assert code == app.EXIT_USAGE


def test_extract_writes_one_row_per_window(feature_csv):
    frame = pd.read_csv(feature_csv)

    # 2 users x 4 pockets, 3000 samples each, window 50 without overlap
    assert len(frame) == 8 * 60
    assert frame.shape[1] == 75
    assert list(frame.columns[-3:]) == ["subject", "activity", "sensor"]
    assert frame.columns[0] == "x_mean"


def test_extract_refuses_to_overwrite(dataset, feature_csv):
    code = app.main(["extract", "--dataset", str(dataset), "--out", str(feature_csv)])

    assert code == app.EXIT_RUNTIME


def test_reduce_writes_projected_columns(feature_csv, tmp_path):
    out = tmp_path / "pca.csv"

    code = app.main(["reduce", "--features", str(feature_csv), "--method", "PCA", "--n-features", "5",
                     "--out", str(out), "--save", str(tmp_path / "projector.json")])

    assert code == app.EXIT_OK
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["pca_1", "pca_2", "pca_3", "pca_4", "pca_5", "subject", "activity", "sensor"]
    assert (tmp_path / "projector.json").is_file()
    assert (tmp_path / "projector.normalizer.json").is_file()


def test_train_then_score_a_bundle(feature_csv, tmp_path):
    bundle = tmp_path / "bundle.json"

    assert app.main(["train", "--features", str(feature_csv), "--method", "PCA", "--n-features", "10",
                     "--save", str(bundle)]) == app.EXIT_OK
    assert app.main(["evaluate", "--model", str(bundle), "--features", str(feature_csv)]) == app.EXIT_OK
    assert app.main(["evaluate", "--model", str(bundle)]) == app.EXIT_USAGE


def test_evaluate_writes_reports(tmp_path):
    code = app.main(_small_run(tmp_path, "--method", "NONE", "PCA", "--n-features", "10"))

    assert code == app.EXIT_OK
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert list(summary["method"]) == ["NONE", "PCA"]
    assert list(summary["features"]) == [72, 10]
    report = json.loads((tmp_path / "quick-method=NONE.json").read_text())
    assert report["protocol"] == "KFOLD-3"
    assert len(report["splits"]) == 3
    assert not (tmp_path / "per_user.csv").exists()


def test_evaluate_does_not_overwrite_without_force(tmp_path):
    assert app.main(_small_run(tmp_path)) == app.EXIT_OK
    assert app.main(_small_run(tmp_path)) == app.EXIT_RUNTIME
    assert app.main(_small_run(tmp_path, "--force")) == app.EXIT_OK


def test_existing_summary_stops_the_run_before_computing(tmp_path):
    (tmp_path / "summary.csv").write_text("kept\n", encoding="utf-8")

    assert app.main(_small_run(tmp_path)) == app.EXIT_RUNTIME
    assert not (tmp_path / "quick.json").exists()
    assert (tmp_path / "summary.csv").read_text() == "kept\n"


def test_benchmark_validates_every_swept_experiment(tmp_path, capsys):
    config = tmp_path / "sweep.conf"
    config.write_text("name = sweep\nsynthetic.duration_s = 20, 2\n", encoding="utf-8")

    # 150-sample windows fit the 20 s recordings but not the 2 s ones
    code = app.main(["benchmark", "--preset", "quick", "--config", str(config),
                     "--windows", "25", "150", "--output-dir", str(tmp_path)])

    assert code == app.EXIT_USAGE
    assert "benchmark sweep" not in capsys.readouterr().out
    assert not (tmp_path / "benchmark.csv").exists()


def test_leave_one_subject_out_reports_one_split_per_user(tmp_path):
    code = app.main(_small_run(tmp_path, "--users", "4", "--sessions", "1", "--protocol", "loso",
                               "--loso-mode", "subject"))

    assert code == app.EXIT_OK
    report = json.loads((tmp_path / "quick.json").read_text())
    assert report["protocol"] == "LOSO-SUBJECT"
    assert len(report["splits"]) == 4


def test_session_hold_out_writes_per_user_table(tmp_path):
    code = app.main(_small_run(tmp_path, "--protocol", "loso"))

    assert code == app.EXIT_OK
    per_user = pd.read_csv(tmp_path / "per_user.csv")
    assert len(per_user) == 3


@pytest.mark.parametrize("extra", [["--window", "10"], ["--method", "PCA", "--n-features", "80"],
                                   ["--protocol", "loso", "--target", "two_stage"]])
def test_bad_experiment_settings_exit_before_running(tmp_path, extra):
    assert app.main(_small_run(tmp_path, *extra)) == app.EXIT_USAGE
    assert not (tmp_path / "summary.csv").exists()


def test_bad_thread_count_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("GAITID_THREADS", "many")

    assert app.main(_small_run(tmp_path)) == app.EXIT_USAGE


def test_config_file_sweep(tmp_path):
    config = tmp_path / "sweep.conf"
    config.write_text("name = sweep\nwindow_size = 25, 50\n", encoding="utf-8")

    code = app.main(_small_run(tmp_path, "--config", str(config)))

    assert code == app.EXIT_OK
    assert (tmp_path / "sweep-window_size=25.json").is_file()
    assert (tmp_path / "sweep-window_size=50.json").is_file()


def test_benchmark_table(tmp_path):
    code = app.main(["benchmark", "--preset", "quick", "--duration", "10", "--sessions", "1",
                     "--windows", "25", "50", "--output-dir", str(tmp_path)])

    assert code == app.EXIT_OK
    table = pd.read_csv(tmp_path / "benchmark.csv")
    assert list(table["window_size"]) == [25, 50]
    assert table["n_windows"].iloc[0] == 2 * table["n_windows"].iloc[1]
