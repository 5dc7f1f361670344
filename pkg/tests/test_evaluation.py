import json

import numpy as np
import pytest
from scipy import integrate, optimize, special

from gaitid.errors import ConfigError, InvalidInputError, InvalidParameterError, StratificationError
from gaitid.evaluation import (EvalReport, TrainedPipeline, TwoStageIdentifier, benchmark, confidence_interval,
                               evaluate_split, identify_two_stage, loso_splits, run_experiment, session_splits,
                               stratified_kfold)
from gaitid.features import FeatureMatrix
from gaitid.kelm import KELMClassifier, KernelParams
from gaitid.pipeline_config import PipelineConfig
from gaitid.stage_timer import StageTimer, timed
from gaitid.synthetic import SyntheticSpec


def small_config(**changes):
    config = PipelineConfig(
        name="small",
        synthetic=SyntheticSpec(n_users=3, n_sessions=2, duration_s=10.0, seed=7, sensors=("ACC",)),
        window_size=50,
        method="NONE",
        folds=3,
        seed=7,
    )
    return config.with_overrides(**changes)


def _matrix(values, subjects, activities, sessions=None):
    n = len(values)
    return FeatureMatrix(
        values=np.asarray(values, dtype=float),
        subject_ids=np.asarray(subjects, dtype=object),
        sub_activities=np.asarray(activities, dtype=object),
        sensors=np.full(n, "ACC", dtype=object),
        sessions=np.asarray(sessions if sessions is not None else ["0"] * n, dtype=object),
        columns=[f"c{k}" for k in range(np.asarray(values).shape[1])],
    )


def _cascade_data(rng, n=6):
    """Two well separated activities (first coordinate), three subjects each (second coordinate)."""
    values, activities, subjects = [], [], []
    for a, activity in enumerate(["BLP", "FRP"]):
        for s, subject in enumerate(["u01", "u02", "u03"]):
            values.append(np.column_stack([np.full(n, 10.0 * a), np.full(n, 3.0 * s)]) + rng.normal(0, 0.1, (n, 2)))
            activities += [activity] * n
            subjects += [subject] * n
    return np.vstack(values), np.array(activities, dtype=object), np.array(subjects, dtype=object)


# ==================== Splits ====================

def test_stratified_folds_are_balanced_and_partition():
    labels = np.repeat(["a", "b"], 10)

    splits = stratified_kfold(labels, 5, seed=1)

    assert len(splits) == 5
    for split in splits:
        test_labels = labels[split.test_indices]
        assert (test_labels == "a").sum() == 2 and (test_labels == "b").sum() == 2
        assert np.intersect1d(split.train_indices, split.test_indices).size == 0
    assert sorted(np.concatenate([s.test_indices for s in splits]).tolist()) == list(range(20))
    assert splits[2].descriptor == "fold 3/5"


def test_stratified_folds_are_deterministic():
    labels = np.repeat(["a", "b", "c"], 7)

    first = stratified_kfold(labels, 3, seed=4)
    second = stratified_kfold(labels, 3, seed=4)

    for a, b in zip(first, second):
        assert np.array_equal(a.test_indices, b.test_indices)


def test_small_class_names_itself():
    labels = np.array(["a"] * 10 + ["rare"] * 2)

    with pytest.raises(StratificationError) as excinfo:
        stratified_kfold(labels, 3)

    assert excinfo.value.label == "rare"


def test_kfold_needs_two_folds():
    with pytest.raises(InvalidParameterError):
        stratified_kfold(["a", "b"], 1)


def test_loso_one_split_per_subject():
    subjects = np.repeat([f"s{k:02d}" for k in range(16)], 3)

    splits = loso_splits(subjects)

    assert len(splits) == 16
    assert sorted(np.concatenate([s.test_indices for s in splits]).tolist()) == list(range(48))
    for split in splits:
        assert len(set(subjects[split.test_indices])) == 1
        assert subjects[split.test_indices[0]] not in set(subjects[split.train_indices])


def test_loso_needs_two_subjects():
    with pytest.raises(InvalidInputError):
        loso_splits(["u01"] * 5)


def test_session_splits():
    splits = session_splits(["s1", "s2", "s1", "s3"])

    assert [s.descriptor for s in splits] == ["held-out session s1", "held-out session s2", "held-out session s3"]
    assert splits[0].test_indices.tolist() == [0, 2]


# ==================== Confidence intervals ====================

def test_confidence_interval_example():
    mean, halfwidth = confidence_interval([0.96, 0.98, 1.00], 0.99)

    assert np.isclose(mean, 0.98)
    assert np.isclose(halfwidth, 0.1146, atol=5e-4)


def test_identical_values_have_zero_width():
    assert confidence_interval([0.9] * 5)[1] == 0.0


def test_higher_level_is_wider():
    values = [0.91, 0.95, 0.97, 0.99]

    assert confidence_interval(values, 0.99)[1] > confidence_interval(values, 0.95)[1]


def test_confidence_interval_errors():
    with pytest.raises(InvalidInputError):
        confidence_interval([0.9])
    with pytest.raises(InvalidParameterError):
        confidence_interval([0.9, 0.8], 1.0)


def _t_quantile_by_integration(p, dof):
    log_norm = special.gammaln((dof + 1) / 2) - special.gammaln(dof / 2) - 0.5 * np.log(dof * np.pi)

    def pdf(x):
        return np.exp(log_norm - (dof + 1) / 2 * np.log1p(x * x / dof))

    def cdf_minus_p(q):
        return 0.5 + integrate.quad(pdf, 0.0, q)[0] - p

    return optimize.brentq(cdf_minus_p, 0.0, 200.0, xtol=1e-12)


@pytest.mark.parametrize("n", [3, 5, 10, 30])
def test_confidence_interval_matches_integrated_t(n, rng):
    values = rng.uniform(0.8, 1.0, size=n)

    _, halfwidth = confidence_interval(values, 0.99)

    quantile = _t_quantile_by_integration(0.995, n - 1)
    expected = quantile * np.std(values, ddof=1) / np.sqrt(n)
    assert abs(halfwidth - expected) < 1e-3


# ==================== Two-stage identification ====================

def test_two_stage_matches_stage_two_when_activities_are_right(rng):
    X, activities, subjects = _cascade_data(rng)
    identifier = TwoStageIdentifier(KernelParams(a=10.0, b=1.0, C=100.0)).fit(X, activities, subjects)

    X_test, activities_test, _ = _cascade_data(np.random.default_rng(5))
    result = identifier.predict(X_test)
    stage_two, _ = identifier.predict_subjects(X_test, activities_test)

    assert list(result.activities) == list(activities_test)
    assert list(result.subjects) == list(stage_two)
    assert result.fallback_count == 0


def test_claims_set_legitimacy(rng):
    X, activities, subjects = _cascade_data(rng)
    train = _matrix(X, subjects, activities)
    claims = np.where(np.arange(len(X)) % 2 == 0, subjects, "u09")

    result = identify_two_stage(train, train, KernelParams(a=10.0, b=1.0, C=100.0), claimed_subjects=claims)

    assert list(result.legitimate) == list(result.subjects == claims)
    assert not result.legitimate[1::2].any()


def test_single_activity_reduces_to_stage_two(rng):
    X, activities, subjects = _cascade_data(rng)
    keep = activities == "BLP"
    params = KernelParams(a=10.0, b=1.0, C=100.0)

    result = identify_two_stage(_matrix(X[keep], subjects[keep], activities[keep]),
                                _matrix(X[keep] + 0.05, subjects[keep], activities[keep]), params)
    direct = KELMClassifier(params).fit(X[keep], subjects[keep]).predict(X[keep] + 0.05)

    assert set(result.activities) == {"BLP"}
    assert list(result.subjects) == list(direct)


def test_activity_with_one_subject_falls_back(rng):
    X, activities, subjects = _cascade_data(rng)
    subjects = subjects.copy()
    subjects[activities == "FRP"] = "u01"

    identifier = TwoStageIdentifier(KernelParams(a=10.0, b=1.0, C=100.0)).fit(X, activities, subjects)
    result = identifier.predict(X)

    assert result.fallback_count == int((result.activities == "FRP").sum()) > 0


def test_unseen_test_activity_is_rejected(rng):
    X, activities, subjects = _cascade_data(rng)
    keep = activities == "BLP"

    with pytest.raises(InvalidInputError):
        identify_two_stage(_matrix(X[keep], subjects[keep], activities[keep]), _matrix(X, subjects, activities))


# ==================== Timing ====================

def test_timed_records_into_the_timer():
    timer = StageTimer()

    result, elapsed = timed("train", lambda: 41 + 1, timer, repetitions=3)

    assert result == 42 and elapsed >= 0.0
    summary = timer.get_summary()
    assert summary["train"]["count"] == 3
    assert "variance_s2" in summary["train"]


# ==================== Experiments ====================

def test_raw_features_experiment(small_features):
    report = run_experiment(small_config(), features=small_features)

    assert report.protocol == "KFOLD-3"
    assert len(report.accuracies) == 3
    assert report.feature_dim == 72
    assert "projection" not in report.timings
    assert {"train", "predict"} <= set(report.timings)
    assert np.isclose(report.mean_accuracy, np.mean(report.accuracies))
    assert report.ci_halfwidth >= 0.0


def test_experiment_extracts_when_no_features_given():
    report = run_experiment(small_config())

    assert report.n_windows == 3 * 4 * 2 * 10
    assert "extraction" in report.timings
    assert all(0.0 <= a <= 1.0 for a in report.accuracies)


def test_pca_experiment_is_timed_and_reduced(small_features):
    report = run_experiment(small_config(method="PCA", n_features=10), features=small_features)

    assert report.feature_dim == 10
    assert "projection" in report.timings
    assert report.config["method"] == "PCA"


def test_same_seed_same_report(small_features):
    config = small_config(method="PCA", n_features=10)

    first = run_experiment(config, features=small_features)
    second = run_experiment(config, features=small_features, threads=2)

    assert first.to_json(include_timings=False) == second.to_json(include_timings=False)


def test_loso_subject_mode(small_features):
    report = run_experiment(small_config(protocol="LOSO", loso_mode="SUBJECT"), features=small_features)

    assert report.protocol == "LOSO-SUBJECT"
    assert report.target == "SUB_ACTIVITY"
    assert report.split_descriptors == ["held-out subject u01", "held-out subject u02", "held-out subject u03"]


def test_loso_session_mode_reports_per_user(small_features):
    report = run_experiment(small_config(protocol="LOSO", loso_mode="SESSION"), features=small_features)

    assert report.protocol == "LOSO-SESSION"
    assert report.target == "LEGITIMATE_VS_REST"
    assert report.split_descriptors == ["user u01", "user u02", "user u03"]
    assert len(report.split_halfwidths) == 3
    assert report.timings["train"]["count"] == 3 * 2


def _sessions_matrix(rng, layout):
    """Rows per (subject, session) in layout, clustered around the subject number."""
    values, subjects, sessions = [], [], []
    for subject, user_sessions in layout:
        for session in user_sessions:
            values.append(rng.normal(float(subject), 0.1, size=(8, 3)))
            subjects += [subject] * 8
            sessions += [session] * 8
    return _matrix(np.vstack(values), subjects, ["GENERIC"] * len(subjects), sessions)


def test_session_hold_out_skips_users_seen_in_one_session(rng):
    matrix = _sessions_matrix(rng, [("1", ["train-0", "train-1"]), ("2", ["test-0"]),
                                    ("3", ["train-0", "train-1"])])

    report = run_experiment(small_config(protocol="LOSO", loso_mode="SESSION"), features=matrix)

    assert report.split_descriptors == ["user 1", "user 3"]
    assert len(report.split_halfwidths) == 2
    assert all(0.0 <= a <= 1.0 for a in report.accuracies)
    # held-out train-0 and train-1 score both users; held-out test-0 scores nobody
    assert report.timings["train"]["count"] == 4


def test_session_hold_out_with_no_repeated_user(rng):
    matrix = _sessions_matrix(rng, [("1", ["s1"]), ("2", ["s2"])])

    with pytest.raises(ConfigError, match="two or more sessions"):
        run_experiment(small_config(protocol="LOSO", loso_mode="SESSION"), features=matrix)


def test_subject_hold_out_on_a_single_pocket(rng):
    matrix = _sessions_matrix(rng, [("1", ["s1"]), ("2", ["s1"]), ("3", ["s1"])])

    with pytest.raises(ConfigError, match="GENERIC"):
        run_experiment(small_config(protocol="LOSO", loso_mode="SUBJECT"), features=matrix)


def test_two_stage_experiment(small_features):
    report = run_experiment(small_config(target="TWO_STAGE"), features=small_features)

    assert report.target == "TWO_STAGE"
    assert len(report.accuracies) == 3
    assert report.fallback_count >= 0


@pytest.mark.parametrize("changes", [
    {"method": "PCA", "n_features": 80},
    {"window_size": 300},
    {"folds": 1},
    {"protocol": "LOSO", "target": "TWO_STAGE"},
])
def test_bad_configuration_fails_before_running(changes):
    with pytest.raises(ConfigError):
        run_experiment(small_config(**changes))


def test_window_longer_than_synthetic_recordings():
    config = small_config(synthetic=SyntheticSpec(n_users=3, n_sessions=1, duration_s=2.0, sensors=("ACC",)),
                          window_size=150)

    with pytest.raises(ConfigError):
        run_experiment(config)


def test_shuffled_test_labels_do_not_touch_training(small_features):
    config = small_config(method="PCA", n_features=10)
    split = stratified_kfold(small_features.subject_ids, 3, seed=7)[0]
    labels = small_features.subject_ids.copy()
    shuffled = labels.copy()
    shuffled[split.test_indices] = np.random.default_rng(0).permutation(labels[split.test_indices])

    clean = evaluate_split(small_features, split, config, labels)
    tampered = evaluate_split(small_features, split, config, shuffled)

    assert clean.train_accuracy == tampered.train_accuracy
    assert list(clean.predictions) == list(tampered.predictions)


def test_report_json_round_trip(tmp_path, small_features):
    report = run_experiment(small_config(), features=small_features)

    path = report.save_json(tmp_path / "report.json")
    restored = EvalReport.from_dict(json.loads(path.read_text()))

    assert restored.accuracies == report.accuracies
    assert restored.timings == report.timings
    with pytest.raises(FileExistsError):
        report.save_json(path)


def test_trained_pipeline_round_trip(tmp_path, small_features):
    config = small_config(method="PCA", n_features=10)
    bundle = TrainedPipeline.fit(small_features, config)

    restored = TrainedPipeline.load(bundle.save(tmp_path / "bundle.json"))

    assert list(restored.predict(small_features)) == list(bundle.predict(small_features))
    assert bundle.score(small_features) > 0.9


def test_trained_pipeline_refuses_two_stage(small_features):
    with pytest.raises(ConfigError):
        TrainedPipeline.fit(small_features, small_config(target="TWO_STAGE"))


def test_benchmark_rows_per_window():
    rows, reports = benchmark(small_config(), window_sizes=(25, 50, 100, 200))

    assert [r.window_size for r in rows] == [25, 50, 100, 200]
    # 24 recordings of 500 samples, no overlap
    assert [r.n_windows for r in rows] == [480, 240, 120, 48]
    assert [r.name for r in reports] == ["small-w25", "small-w50", "small-w100", "small-w200"]
    assert all(r.extraction_s > 0.0 for r in rows)
    assert rows[0].classification_s > rows[-1].classification_s


# ==================== Long-running checks ====================

@pytest.mark.slow
def test_tuned_esp30_on_default_synthetic_users():
    config = PipelineConfig.best_settings()

    esp = run_experiment(config, threads=4)
    pca = run_experiment(config.with_overrides(name="pca30", method="PCA"), threads=4)

    assert len(esp.accuracies) == 10
    assert esp.mean_accuracy >= 0.95
    assert len(esp.kernel_params) == 10
    assert pca.split_descriptors == esp.split_descriptors
    assert pca.n_windows == esp.n_windows


@pytest.mark.slow
def test_cascade_close_to_stage_two_alone():
    config = PipelineConfig(synthetic=SyntheticSpec(n_users=4, n_sessions=4, duration_s=30.0, seed=7,
                                                    sensors=("ACC",)))
    cascade = run_experiment(config.with_overrides(target="TWO_STAGE", folds=5), threads=4)
    direct = run_experiment(config.with_overrides(target="SUBJECT", folds=5), threads=4)

    assert cascade.mean_accuracy >= direct.mean_accuracy - 0.05
