"""
KELM - Wavelet-kernel Extreme Learning Machine

The random hidden layer of a classic ELM is replaced by a kernel, which turns
training into one regularized linear solve:

    (I / C + M) W = T,    M_ij = k(x_i, x_j)
    f(x) = [k(x, x_1), ..., k(x, x_N)] W

with the wavelet kernel k(x, y) = cos(|x - y|^2 / a) * exp(-|x - y|^2 / b).
T is the one-hot target matrix with +1 for the true class and -1 elsewhere.
"""
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from gaitid.errors import InvalidLabelError, InvalidParameterError, ShapeError, TrainingError
from gaitid.storage import load_document, matrix_from_doc, matrix_to_doc, save_document

logger = logging.getLogger(__name__)

RESIDUAL_TOLERANCE = 1e-6


@dataclass
class KernelParams:
    """
    Wavelet-kernel and regularization parameters.

    Attributes:
        a: Cosine scale (> 0)
        b: Exponential scale (> 0)
        C: Regularization coefficient (> 0); the solve adds I / C
    """
    a: float = 1.0
    b: float = 1.0
    C: float = 100.0

    def validate(self) -> bool:
        for name in ("a", "b", "C"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidParameterError(f"kernel parameter {name} must be a positive finite number, got {value}")
        return True

    def to_log10(self) -> np.ndarray:
        return np.log10([self.a, self.b, self.C])

    @classmethod
    def from_log10(cls, position: Sequence[float]) -> "KernelParams":
        a, b, C = (float(10.0 ** p) for p in position)
        return cls(a=a, b=b, C=C)

    def to_dict(self) -> dict:
        return asdict(self)


def wavelet_kernel(x: np.ndarray, y: np.ndarray, params: KernelParams) -> float:
    """
    Wavelet kernel between two vectors.

    Example:
        x=(0,0), y=(1,1), a=4, b=2 -> cos(0.5) * exp(-1) ~ 0.32282
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ShapeError(f"wavelet_kernel needs equal-length vectors, got {x.shape} and {y.shape}")
    squared = float(np.sum((x - y) ** 2))
    return float(np.cos(squared / params.a) * np.exp(-squared / params.b))


def kernel_matrix(X1: np.ndarray, X2: np.ndarray, params: KernelParams) -> np.ndarray:
    """Kernel matrix K[i, j] = wavelet_kernel(X1[i], X2[j]); symmetric when X1 is X2."""
    X1 = np.asarray(X1, dtype=np.float64)
    X2 = np.asarray(X2, dtype=np.float64)
    if X1.ndim != 2 or X2.ndim != 2 or X1.shape[1] != X2.shape[1]:
        raise ShapeError(f"kernel_matrix needs matrices with equal columns, got {X1.shape} and {X2.shape}")
    squared = cdist(X1, X2, metric="sqeuclidean")
    return np.cos(squared / params.a) * np.exp(-squared / params.b)


def _one_hot(labels: np.ndarray, classes: np.ndarray) -> np.ndarray:
    index = np.searchsorted(classes, labels)
    targets = -np.ones((labels.shape[0], classes.shape[0]))
    targets[np.arange(labels.shape[0]), index] = 1.0
    return targets


@dataclass
class KELMModel:
    """
    Trained KELM.

    Attributes:
        train_inputs: (N, m) training rows
        output_weights: (N, K) solution W of (I / C + M) W = T
        classes: K sorted unique labels; column k of the scores belongs to classes[k]
        params: Kernel parameters used for the solve
        training_residual: max-norm residual of the solve
    """
    train_inputs: np.ndarray
    output_weights: np.ndarray
    classes: np.ndarray
    params: KernelParams
    training_residual: float = 0.0

    @property
    def n_classes(self) -> int:
        return int(self.classes.shape[0])

    @property
    def condition_number(self) -> float:
        """2-norm condition number of I / C + M (recomputed on demand)."""
        system = _system_matrix(self.train_inputs, self.params)
        return float(np.linalg.cond(system))

    def predict(self, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return kelm_predict(self, X)

    def to_payload(self) -> dict:
        return {
            "classes": [str(c) for c in self.classes],
            "params": self.params.to_dict(),
            "training_residual": self.training_residual,
            "train_inputs": matrix_to_doc(self.train_inputs),
            "output_weights": matrix_to_doc(self.output_weights),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "KELMModel":
        return cls(
            train_inputs=matrix_from_doc(payload["train_inputs"]),
            output_weights=matrix_from_doc(payload["output_weights"]),
            classes=np.asarray(payload["classes"], dtype=object),
            params=KernelParams(**payload["params"]),
            training_residual=float(payload.get("training_residual", 0.0)),
        )

    def save(self, path: Union[str, Path], force: bool = False) -> Path:
        return save_document(path, "kelm", self.to_payload(), force=force)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "KELMModel":
        return cls.from_payload(load_document(path, "kelm"))


def _system_matrix(X: np.ndarray, params: KernelParams) -> np.ndarray:
    system = kernel_matrix(X, X, params)
    system[np.diag_indices_from(system)] += 1.0 / params.C
    return system


def kelm_train(X: np.ndarray, labels: Sequence, params: Optional[KernelParams] = None) -> KELMModel:
    """
    Train a KELM by solving (I / C + M) W = T.

    The system is symmetric but may be indefinite (the cosine factor), so a
    general symmetric solve is used; if it fails, a least-squares solve is
    tried and the condition number logged.

    Args:
        X: (N, m) training rows
        labels: N labels (any sortable, hashable type)
        params: Kernel parameters (defaults a=1, b=1, C=100)

    Raises:
        InvalidLabelError: fewer than 2 rows or fewer than 2 distinct labels
        ShapeError: label count differs from row count
        TrainingError: the system has non-finite entries or no finite solution
    """
    params = params or KernelParams()
    params.validate()
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if X.ndim != 2:
        raise ShapeError(f"kelm_train needs a 2-D matrix, got shape {X.shape}")
    if X.shape[0] != labels.shape[0]:
        raise ShapeError(f"{X.shape[0]} rows but {labels.shape[0]} labels")
    if X.shape[0] < 2:
        raise InvalidLabelError(f"KELM needs at least 2 training rows, got {X.shape[0]}")
    classes = np.unique(labels)
    if classes.shape[0] < 2:
        raise InvalidLabelError(f"KELM needs at least 2 classes, got {classes.tolist()}")

    targets = _one_hot(labels, classes)
    system = _system_matrix(X, params)
    if not np.all(np.isfinite(system)):
        raise TrainingError("kernel matrix has non-finite entries")

    weights = None
    residual = np.inf
    try:
        weights = linalg.solve(system, targets, assume_a="sym", check_finite=False)
        residual = float(np.max(np.abs(system @ weights - targets)))
    except (linalg.LinAlgError, ValueError) as exc:
        logger.debug("symmetric solve failed: %s", exc)

    if weights is None or not np.isfinite(residual) or residual >= RESIDUAL_TOLERANCE:
        condition = float(np.linalg.cond(system))
        logger.warning("KELM symmetric solve residual %.3g; falling back to least squares (condition number %.3e)",
                       residual, condition)
        fallback, *_ = linalg.lstsq(system, targets)
        fallback_residual = float(np.max(np.abs(system @ fallback - targets)))
        if np.isfinite(fallback_residual) and (weights is None or not np.isfinite(residual)
                                               or fallback_residual < residual):
            weights, residual = fallback, fallback_residual
        if weights is None or not np.isfinite(residual):
            raise TrainingError("KELM solve produced no finite solution", condition_number=condition)
        if residual >= RESIDUAL_TOLERANCE:
            logger.warning("KELM solve residual %.3g exceeds %.0e", residual, RESIDUAL_TOLERANCE)

    return KELMModel(
        train_inputs=X.copy(),
        output_weights=weights,
        classes=classes,
        params=params,
        training_residual=residual,
    )


def kelm_predict(model: KELMModel, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Score rows and pick the arg-max class (ties go to the lowest class index).

    Returns:
        (labels of shape (n,), scores of shape (n, K))
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.train_inputs.shape[1]:
        raise ShapeError(f"model expects {model.train_inputs.shape[1]} features, got {X.shape[1]}")
    scores = kernel_matrix(X, model.train_inputs, model.params) @ model.output_weights
    return model.classes[np.argmax(scores, axis=1)], scores


class KELMClassifier:
    """
    fit / predict wrapper around kelm_train and kelm_predict.

    Example:
        >>> clf = KELMClassifier(KernelParams(a=1, b=1, C=100)).fit(X_train, y_train)
        >>> accuracy = clf.score(X_test, y_test)
    """

    def __init__(self, params: Optional[KernelParams] = None):
        self.params = params or KernelParams()
        self.model: Optional[KELMModel] = None

    def fit(self, X: np.ndarray, labels: Sequence) -> "KELMClassifier":
        self.model = kelm_train(X, labels, self.params)
        return self

    def _require_model(self) -> KELMModel:
        if self.model is None:
            raise TrainingError("classifier is not fitted")
        return self.model

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return kelm_predict(self._require_model(), X)[1]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return kelm_predict(self._require_model(), X)[0]

    def score(self, X: np.ndarray, labels: Sequence) -> float:
        predicted = self.predict(X)
        return float(np.mean(predicted == np.asarray(labels)))
