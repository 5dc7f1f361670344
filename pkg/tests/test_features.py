import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import lfilter

from gaitid.errors import InvalidInputError, ShapeError
from gaitid.features import (N_FEATURES, FeatureMatrix, apply_normalizer, autocorrelation, basic_stats,
                             extract_feature_vector, extract_features, feature_schema, fit_ar, fit_arma, fit_ma,
                             fit_normalizer, partial_autocorrelation, wavelet_energies)
from gaitid.signal_io import Sensor, SubActivity, Window, segment_windows


def _window(data, subject="u01"):
    return Window(subject_id=subject, sensor=Sensor.ACC, sub_activity=SubActivity.BLP, data=data)


def _arma(phi, theta, n, seed):
    noise = np.random.default_rng(seed).standard_normal(n + 500)
    return lfilter([1.0, theta], [1.0, -phi], noise)[500:]


def test_schema_layout():
    schema = feature_schema()

    assert len(schema) == N_FEATURES == 72
    assert len(set(schema)) == 72
    assert schema[:5] == ["x_mean", "x_median", "x_variance", "x_std", "x_iqr"]
    assert schema[24] == "y_mean"
    assert schema[-1] == "z_wav3"


def test_basic_stats_example():
    out = basic_stats([1, 2, 3, 4, 5])

    assert np.allclose(out, [3.0, 3.0, 2.5, np.sqrt(2.5), 2.0])


def test_autocorrelation_of_alternating_sequence():
    x = np.tile([1.0, -1.0], 25)

    ac = autocorrelation(x, 4)

    assert np.isclose(ac.values[0], -49.0 / 50.0)
    assert not ac.degenerate


def test_constant_sequence_is_degenerate():
    x = np.full(40, 3.0)

    assert autocorrelation(x, 4).degenerate
    assert np.allclose(autocorrelation(x, 4).values, 0.0)
    assert partial_autocorrelation(x, 4).degenerate
    for fit in (fit_ar(x, 3), fit_ma(x, 3), fit_arma(x, 1, 1)):
        assert fit.degenerate
        assert np.allclose(np.concatenate([fit.ar_coefficients, fit.ma_coefficients]), 0.0)


def test_autocorrelation_matches_direct_sum(rng):
    x = rng.normal(size=200)
    c = x - x.mean()

    expected = [np.sum(c[k:] * c[:-k]) / np.sum(c * c) for k in range(1, 5)]

    assert np.allclose(autocorrelation(x, 4).values, expected, rtol=0, atol=1e-8)


def _lag_regression_pac(x, max_lag):
    """Last least-squares coefficient of x_t on x_{t-1..t-k}, with the centered series zero-padded."""
    c = np.asarray(x, dtype=float) - np.mean(x)
    out = []
    for k in range(1, max_lag + 1):
        padded = np.concatenate([np.zeros(k), c, np.zeros(k)])
        rows = range(k, padded.shape[0])
        design = np.array([[padded[t - j] for j in range(1, k + 1)] for t in rows])
        target = np.array([padded[t] for t in rows])
        coefficients, *_ = np.linalg.lstsq(design, target, rcond=None)
        out.append(coefficients[-1])
    return np.array(out)


@pytest.mark.parametrize("seed", range(20))
def test_partial_autocorrelation_matches_lag_regression(seed):
    rng = np.random.default_rng(seed)
    x = _arma(rng.uniform(-0.8, 0.8), rng.uniform(-0.5, 0.5), int(rng.integers(50, 300)), seed=seed)

    pac = partial_autocorrelation(x, 4)

    assert np.allclose(pac.values, _lag_regression_pac(x, 4), rtol=0, atol=1e-8)
    assert pac.values[0] == pytest.approx(autocorrelation(x, 4).values[0], abs=1e-12)


def test_white_noise_partial_autocorrelation_is_small():
    x = np.random.default_rng(21).standard_normal(5000)

    assert np.all(np.abs(partial_autocorrelation(x, 4).values) < 0.05)


def test_ar1_partial_autocorrelation_cuts_off():
    pac = partial_autocorrelation(_arma(0.6, 0.0, 5000, seed=22), 4).values

    assert 0.5 < pac[0] < 0.7
    assert np.all(np.abs(pac[1:]) < 0.1)


def test_autocorrelations_agree_with_statsmodels(rng):
    stattools = pytest.importorskip("statsmodels.tsa.stattools")
    x = rng.normal(size=150).cumsum()

    assert np.allclose(autocorrelation(x, 4).values, stattools.acf(x, nlags=4, fft=False)[1:], atol=1e-10)
    assert np.allclose(partial_autocorrelation(x, 4).values, stattools.pacf(x, nlags=4, method="ywm")[1:],
                       atol=1e-8)


def test_ar_agrees_with_statsmodels_yule_walker():
    linear_model = pytest.importorskip("statsmodels.regression.linear_model")
    x = _arma(0.5, 0.2, 400, seed=11)

    rho, _ = linear_model.yule_walker(x, order=3, method="mle")

    assert np.allclose(fit_ar(x, 3).ar_coefficients, rho, atol=1e-8)


def _estimates_over_seeds(fit, phi, theta, coefficient):
    return np.array([coefficient(fit(_arma(phi, theta, 5000, seed=seed))) for seed in range(20)])


@pytest.mark.parametrize("fit, phi, theta, coefficient, truth", [
    (lambda x: fit_ar(x, 1), 0.6, 0.0, lambda f: f.ar_coefficients[0], 0.6),
    (lambda x: fit_ma(x, 1), 0.0, 0.5, lambda f: f.ma_coefficients[0], 0.5),
    (lambda x: fit_arma(x, 1, 1), 0.5, 0.3, lambda f: f.ar_coefficients[0], 0.5),
    (lambda x: fit_arma(x, 1, 1), 0.5, 0.3, lambda f: f.ma_coefficients[0], 0.3),
], ids=["ar1", "ma1", "arma11-phi", "arma11-theta"])
def test_coefficients_recovered_over_twenty_seeds(fit, phi, theta, coefficient, truth):
    estimates = _estimates_over_seeds(fit, phi, theta, coefficient)

    assert abs(estimates.mean() - truth) <= 0.05
    assert np.all(np.abs(estimates - truth) <= 0.15)


def test_white_noise_ar3_is_small():
    x = np.random.default_rng(2).standard_normal(5000)

    assert np.all(np.abs(fit_ar(x, 3).ar_coefficients) < 0.05)


def test_white_noise_ma1_is_small():
    x = np.random.default_rng(23).standard_normal(5000)

    assert abs(fit_ma(x, 1).ma_coefficients[0]) < 0.05


def test_arma11_on_pure_ar_has_small_theta():
    fit = fit_arma(_arma(0.7, 0.0, 5000, seed=6), 1, 1)

    assert abs(fit.ma_coefficients[0]) < 0.1


def test_short_series_rejected_by_strict_ar():
    with pytest.raises(InvalidInputError):
        fit_ar(np.arange(20.0), 3)
    assert fit_ar(np.sin(np.arange(20.0)), 3, strict=False).ar_coefficients.shape == (3,)


def test_haar_energies_of_alternating_signal():
    x = np.tile([1.0, -1.0], 32)

    assert np.allclose(wavelet_energies(x, 3), [2.0, 0.0, 0.0])


def test_haar_energies_of_constant_signal():
    assert np.allclose(wavelet_energies(np.full(64, 5.0), 3), 0.0)


def test_haar_needs_enough_samples():
    with pytest.raises(InvalidInputError):
        wavelet_energies(np.arange(4.0), 3)


def test_feature_vector_shape_and_labels(rng):
    vec = extract_feature_vector(_window(rng.normal(size=(50, 3))))

    assert vec.values.shape == (72,)
    assert np.all(np.isfinite(vec.values))
    assert (vec.subject_id, vec.window_size, vec.reduced_reliability) == ("u01", 50, False)


def test_all_zero_window_is_flagged_not_raised():
    vec = extract_feature_vector(_window(np.zeros((50, 3))))

    assert vec.degenerate
    assert np.allclose(vec.values, 0.0)


def test_short_window_is_reduced_reliability(rng):
    vec = extract_feature_vector(_window(rng.normal(size=(25, 3))))

    assert vec.reduced_reliability
    assert np.all(np.isfinite(vec.values))


def test_identical_windows_give_identical_vectors(rng):
    data = rng.normal(size=(64, 3))

    assert np.array_equal(extract_feature_vector(_window(data)).values,
                          extract_feature_vector(_window(data.copy())).values)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 50.0))
def test_scaling_an_axis(seed, scale):
    data = np.random.default_rng(seed).normal(size=(64, 3))
    scaled = data.copy()
    scaled[:, 0] *= scale

    base = extract_feature_vector(_window(data)).values[:24]
    moved = extract_feature_vector(_window(scaled)).values[:24]
    names = feature_schema()[:24]
    for name, a, b in zip(names, base, moved):
        short = name.split("_", 1)[1]
        if short in ("mean", "median", "std", "iqr"):
            assert np.isclose(b, scale * a, rtol=1e-9, atol=1e-9)
        elif short == "variance" or short.startswith("wav"):
            assert np.isclose(b, scale ** 2 * a, rtol=1e-9, atol=1e-9)
        else:
            assert np.isclose(b, a, rtol=1e-7, atol=1e-7)


def test_extract_features_threads_keep_order(small_recordings):
    windows = [w for rec in small_recordings[:4] for w in segment_windows(rec, 50)]

    serial = extract_features(windows)
    parallel = extract_features(windows, threads=3)

    assert np.array_equal(serial.values, parallel.values)
    assert list(serial.subject_ids) == list(parallel.subject_ids)


def test_feature_csv_round_trip(tmp_path, small_features):
    path = small_features.save_csv(tmp_path / "features.csv")

    loaded = FeatureMatrix.load_csv(path)
    header = path.read_text().splitlines()[0].split(",")

    assert len(header) == 75
    assert header[-3:] == ["subject", "activity", "sensor"]
    assert np.allclose(loaded.values, small_features.values, rtol=1e-12, atol=0)
    assert list(loaded.subject_ids) == list(small_features.subject_ids)


def test_normalizer_examples():
    train = np.array([[2.0, 7.0], [4.0, 7.0], [6.0, 7.0]])
    params = fit_normalizer(train)

    assert np.allclose(apply_normalizer(params, train), [[0.0, 0.5], [0.5, 0.5], [1.0, 0.5]])
    assert np.allclose(apply_normalizer(params, np.array([[8.0, 1.0]])), [[1.0, 0.5]])
    assert np.allclose(apply_normalizer(params, np.array([[0.0, 9.0]])), [[0.0, 0.5]])


def test_normalizer_on_matrix_keeps_labels(small_features):
    params = fit_normalizer(small_features)
    scaled = apply_normalizer(params, small_features)

    assert scaled.values.min() >= 0.0 and scaled.values.max() <= 1.0
    assert scaled.normalization is params
    assert list(scaled.subject_ids) == list(small_features.subject_ids)


def test_normalized_training_columns_span_zero_to_one(small_features):
    scaled = apply_normalizer(fit_normalizer(small_features), small_features).values
    varying = np.ptp(small_features.values, axis=0) > 0

    assert varying.any()
    assert np.all(scaled[:, varying].min(axis=0) == 0.0)
    assert np.all(scaled[:, varying].max(axis=0) == 1.0)
    assert np.all(scaled[:, ~varying] == 0.5)


@pytest.mark.parametrize("size", range(25, 201))
def test_every_window_size_gives_72_finite_features(size):
    t = np.arange(size) / 50.0
    walk = np.column_stack([np.cos(2 * np.pi * 1.8 * t), np.sin(2 * np.pi * 3.6 * t), np.full(size, 9.81)])
    data = walk + 0.1 * np.random.default_rng(size).standard_normal((size, 3))

    values = extract_feature_vector(_window(data)).values

    assert values.shape == (72,)
    assert np.all(np.isfinite(values))


def test_normalizer_shape_mismatch():
    params = fit_normalizer(np.ones((3, 4)))

    with pytest.raises(ShapeError):
        apply_normalizer(params, np.ones((2, 5)))
