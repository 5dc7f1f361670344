import numpy as np
import pytest

from gaitid.errors import InvalidLabelError, InvalidParameterError, ShapeError, TrainingError
from gaitid.kelm import (RESIDUAL_TOLERANCE, KELMClassifier, KELMModel, KernelParams, kelm_predict, kelm_train,
                         kernel_matrix, wavelet_kernel)


def _clusters(rng, n_per_class=10, centers=((0.0, 0.0), (3.0, 3.0), (-3.0, 3.0))):
    X = np.vstack([rng.normal(loc=c, scale=0.2, size=(n_per_class, 2)) for c in centers])
    labels = np.repeat([f"c{k}" for k in range(len(centers))], n_per_class)
    return X, labels


def test_kernel_example():
    value = wavelet_kernel([0.0, 0.0], [1.0, 1.0], KernelParams(a=4.0, b=2.0))

    assert np.isclose(value, np.cos(0.5) * np.exp(-1.0))
    assert np.isclose(value, 0.32282, atol=1e-5)


def test_kernel_of_identical_points_is_one(rng):
    x = rng.normal(size=5)

    assert wavelet_kernel(x, x, KernelParams(a=0.3, b=7.0)) == 1.0


def test_kernel_vanishes_where_the_cosine_does():
    a = 2.0
    r = np.sqrt(np.pi * a / 2.0)

    assert abs(wavelet_kernel([0.0], [r], KernelParams(a=a, b=1.0))) < 1e-12


def test_kernel_matrix_matches_pairwise_kernel(rng):
    X1 = rng.normal(size=(6, 3))
    X2 = rng.normal(size=(4, 3))
    params = KernelParams(a=1.5, b=0.8)

    expected = np.array([[wavelet_kernel(x, y, params) for y in X2] for x in X1])

    assert np.allclose(kernel_matrix(X1, X2, params), expected)
    K = kernel_matrix(X1, X1, params)
    assert np.allclose(K, K.T)
    assert np.allclose(np.diag(K), 1.0)


def test_kernel_matrix_single_pair():
    assert kernel_matrix(np.zeros((1, 2)), np.ones((1, 2)), KernelParams()).shape == (1, 1)


def test_kernel_shape_errors():
    with pytest.raises(ShapeError):
        wavelet_kernel([0.0, 1.0], [0.0], KernelParams())
    with pytest.raises(ShapeError):
        kernel_matrix(np.zeros((2, 3)), np.zeros((2, 2)), KernelParams())


@pytest.mark.parametrize("field", ["a", "b", "C"])
def test_non_positive_parameters_rejected(field):
    params = KernelParams(**{field: 0.0})

    with pytest.raises(InvalidParameterError):
        kelm_train(np.eye(3), ["x", "y", "z"], params)


def test_separated_clusters_are_learned(rng):
    X, labels = _clusters(rng)

    clf = KELMClassifier(KernelParams(a=10.0, b=1.0, C=100.0)).fit(X, labels)
    X_test, labels_test = _clusters(np.random.default_rng(99))

    assert clf.score(X, labels) == 1.0
    assert clf.score(X_test, labels_test) == 1.0


def test_training_accuracy_does_not_drop_as_regularization_loosens(rng):
    X, labels = _clusters(rng)

    accuracies = [KELMClassifier(KernelParams(a=10.0, b=1.0, C=C)).fit(X, labels).score(X, labels)
                  for C in (0.1, 1.0, 10.0, 100.0)]

    assert all(b >= a for a, b in zip(accuracies, accuracies[1:]))


def test_training_residual_is_small(rng):
    X, labels = _clusters(rng)

    model = kelm_train(X, labels, KernelParams(a=1.0, b=1.0, C=100.0))

    assert model.training_residual < RESIDUAL_TOLERANCE
    system = kernel_matrix(X, X, model.params) + np.eye(len(X)) / model.params.C
    targets = np.where(labels[:, None] == model.classes[None, :], 1.0, -1.0)
    assert np.allclose(system @ model.output_weights, targets, atol=1e-6)


def test_two_class_scores_are_antisymmetric(rng):
    X = rng.normal(size=(20, 3))
    labels = np.where(X[:, 0] > 0, "pos", "neg")

    model = kelm_train(X, labels)
    _, scores = kelm_predict(model, rng.normal(size=(7, 3)))

    assert np.allclose(scores[:, 0], -scores[:, 1])


def test_conflicting_duplicates_give_neutral_scores():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0]])
    labels = np.array(["a", "b", "a", "b"])

    model = kelm_train(X, labels, KernelParams(C=1.0))
    _, scores = kelm_predict(model, X)

    assert np.all(np.isfinite(scores))
    assert np.allclose(scores[:, 0], scores[:, 1])


def test_ties_go_to_the_first_class():
    model = KELMModel(train_inputs=np.zeros((2, 1)), output_weights=np.zeros((2, 2)),
                      classes=np.array(["a", "b"], dtype=object), params=KernelParams())

    labels, _ = kelm_predict(model, np.ones((3, 1)))

    assert list(labels) == ["a", "a", "a"]


def test_predict_accepts_a_single_row(rng):
    X, labels = _clusters(rng)
    model = kelm_train(X, labels)

    predicted, scores = kelm_predict(model, X[0])

    assert predicted.shape == (1,)
    assert scores.shape == (1, 3)


def test_label_errors():
    with pytest.raises(InvalidLabelError):
        kelm_train(np.zeros((1, 2)), ["a"])
    with pytest.raises(InvalidLabelError):
        kelm_train(np.random.default_rng(0).normal(size=(4, 2)), ["a"] * 4)
    with pytest.raises(ShapeError):
        kelm_train(np.zeros((3, 2)), ["a", "b"])


def test_feature_count_mismatch(rng):
    X, labels = _clusters(rng)
    model = kelm_train(X, labels)

    with pytest.raises(ShapeError):
        kelm_predict(model, np.zeros((2, 3)))


def test_unfitted_classifier():
    with pytest.raises(TrainingError):
        KELMClassifier().predict(np.zeros((1, 2)))


def test_save_and_load_keep_predictions(tmp_path, rng):
    X, labels = _clusters(rng)
    model = kelm_train(X, labels, KernelParams(a=2.0, b=0.5, C=30.0))

    restored = KELMModel.load(model.save(tmp_path / "kelm.json"))
    queries = rng.normal(scale=3.0, size=(10, 2))

    assert list(kelm_predict(restored, queries)[0]) == list(kelm_predict(model, queries)[0])
    assert np.allclose(kelm_predict(restored, queries)[1], kelm_predict(model, queries)[1])
    assert restored.params == model.params


def test_log10_round_trip():
    params = KernelParams(a=0.01, b=10.0, C=1000.0)

    assert np.allclose(params.to_log10(), [-2.0, 1.0, 3.0])
    restored = KernelParams.from_log10(params.to_log10())
    assert np.allclose([restored.a, restored.b, restored.C], [0.01, 10.0, 1000.0])


def test_condition_number_shrinks_with_stronger_regularization(rng):
    X, labels = _clusters(rng)

    loose = kelm_train(X, labels, KernelParams(a=1.0, b=1.0, C=1000.0))
    tight = kelm_train(X, labels, KernelParams(a=1.0, b=1.0, C=0.1))

    assert loose.condition_number > tight.condition_number >= 1.0
