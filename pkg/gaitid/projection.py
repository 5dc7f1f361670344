"""
Projection - Extended Sammon Projection (ESP) and the PCA baseline

ESP here is classic Sammon mapping with three extensions:
- deterministic PCA initialization,
- monotone safeguarding (a step that raises the stress is halved until it
  does not, so the stress trace never goes up),
- an out-of-sample rule that places new points against fixed anchors.

Stress (canonical Sammon form, d = original-space distance, d* = projected):

    E = (1 / sum_{i<j} d_ij) * sum_{i<j} (d_ij - d*_ij)^2 / d_ij

Pseudo-Newton update per coordinate: dx*_ik = -alpha * (dE/dx*_ik) / |d2E/dx*_ik^2|.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform
from sklearn.decomposition import PCA

from gaitid.errors import DegenerateInputError, InvalidParameterError, ShapeError
from gaitid.storage import load_document, matrix_from_doc, matrix_to_doc, save_document

logger = logging.getLogger(__name__)

EPSILON = 1e-12
DEFAULT_ALPHA = 0.35
TRANSFORM_MAX_ITER = 100
TRANSFORM_CHUNK = 256
MAX_HALVES = 20


class Method(str, Enum):
    NONE = "NONE"
    PCA = "PCA"
    ESP = "ESP"


@dataclass
class ESPSettings:
    """
    Optimizer settings for esp_fit.

    Attributes:
        alpha: Step-size factor in (0, 1]
        max_iter: Iteration cap for the fit
        rel_tol: Stop when the relative stress improvement falls below this
        max_anchors: Fit on at most this many rows (seeded subsample); the rest
            are placed with the out-of-sample rule. None fits on every row.
        max_halves: Step halvings tried before an iteration is declared stalled
    """
    alpha: float = DEFAULT_ALPHA
    max_iter: int = 500
    rel_tol: float = 1e-6
    max_anchors: Optional[int] = 500
    max_halves: int = MAX_HALVES

    def validate(self) -> bool:
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidParameterError(f"ESP alpha must be in (0, 1], got {self.alpha}")
        if self.max_iter < 1:
            raise InvalidParameterError(f"ESP max_iter must be positive, got {self.max_iter}")
        if self.rel_tol < 0:
            raise InvalidParameterError(f"ESP rel_tol must be non-negative, got {self.rel_tol}")
        if self.max_anchors is not None and self.max_anchors < 2:
            raise InvalidParameterError(f"ESP max_anchors must be at least 2, got {self.max_anchors}")
        return True


# ==================== Distances & stress ====================

def pairwise_distances(X: np.ndarray) -> np.ndarray:
    """
    Euclidean distance matrix of the rows of X (symmetric, zero diagonal).

    Raises:
        ShapeError: X is not 2-D or has fewer than 2 rows
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ShapeError(f"pairwise_distances needs an (n>=2, d) matrix, got shape {X.shape}")
    return squareform(pdist(X, metric="euclidean"))


def _guard_high_distances(D_high: np.ndarray) -> Tuple[np.ndarray, int]:
    """Replace zero off-diagonal distances by EPSILON; return (guarded copy, count)."""
    D = np.array(D_high, dtype=np.float64, copy=True)
    off_diagonal = ~np.eye(D.shape[0], dtype=bool)
    zeros = off_diagonal & (D <= 0.0)
    count = int(np.count_nonzero(zeros)) // 2
    D[zeros] = EPSILON
    return D, count


def sammon_stress(D_high: np.ndarray, D_low: np.ndarray) -> float:
    """
    Sammon stress between original-space and projected distance matrices.

    Coincident original points (d_ij = 0) are replaced by EPSILON and counted
    in a warning.

    Example:
        d = (1, 1, 1) high vs (1, 1, 2) low -> E = 1/3
    """
    D_high = np.asarray(D_high, dtype=np.float64)
    D_low = np.asarray(D_low, dtype=np.float64)
    if D_high.shape != D_low.shape or D_high.ndim != 2 or D_high.shape[0] != D_high.shape[1]:
        raise ShapeError(f"distance matrices must be square and equal-shaped, got {D_high.shape} / {D_low.shape}")
    guarded, count = _guard_high_distances(D_high)
    if count:
        logger.warning("sammon_stress: %d coincident point pairs guarded with epsilon=%g", count, EPSILON)
    upper = np.triu_indices(D_high.shape[0], k=1)
    d = guarded[upper]
    d_low = D_low[upper]
    return float(np.sum((d - d_low) ** 2 / d) / np.sum(d))


def stress_gradient(Y: np.ndarray, D_high: np.ndarray,
                    distance_sum: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Analytic first and second derivatives of the Sammon stress w.r.t. Y.

    Args:
        Y: (n, m) projected configuration
        D_high: (n, n) original-space distances (zero off-diagonals guarded here)
        distance_sum: c = sum_{i<j} d_ij (computed if omitted)

    Returns:
        (gradient, diagonal Hessian), both (n, m)
    """
    Y = np.asarray(Y, dtype=np.float64)
    D, _ = _guard_high_distances(D_high)
    n = Y.shape[0]
    if distance_sum is None:
        distance_sum = float(np.sum(D[np.triu_indices(n, k=1)]))

    D_low = pairwise_distances(Y)
    np.fill_diagonal(D_low, 1.0)
    D_low = np.maximum(D_low, EPSILON)
    np.fill_diagonal(D, 1.0)

    inv_low = 1.0 / D_low
    inv_high = 1.0 / D
    np.fill_diagonal(inv_low, 0.0)
    np.fill_diagonal(inv_high, 0.0)

    weights = inv_low - inv_high  # (d - d*) / (d d*)
    weight_sum = weights.sum(axis=1, keepdims=True)
    inv_low3 = inv_low ** 3

    scale = 2.0 / distance_sum
    gradient = scale * (weights @ Y - Y * weight_sum)
    # sum_j (y_pk - y_jk)^2 / d*^3, expanded
    curvature = inv_low3 @ (Y ** 2) - 2.0 * Y * (inv_low3 @ Y) + (Y ** 2) * inv_low3.sum(axis=1, keepdims=True)
    hessian = scale * (curvature - weight_sum)
    return gradient, hessian


# ==================== PCA ====================

@dataclass
class PCAModel:
    """
    Principal components of the training data.

    Attributes:
        mean: (d,) column means
        components: (d, k) orthonormal columns, leading eigenvectors of the sample covariance
        eigenvalues: (k,) descending variances along the components
        explained_variance_ratio: (k,) eigenvalues / total variance
    """
    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    explained_variance_ratio: np.ndarray

    @property
    def n_components(self) -> int:
        return int(self.components.shape[1])

    def to_payload(self) -> dict:
        return {
            "mean": matrix_to_doc(self.mean),
            "components": matrix_to_doc(self.components),
            "eigenvalues": matrix_to_doc(self.eigenvalues),
            "explained_variance_ratio": matrix_to_doc(self.explained_variance_ratio),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "PCAModel":
        return cls(
            mean=matrix_from_doc(payload["mean"]),
            components=matrix_from_doc(payload["components"]),
            eigenvalues=matrix_from_doc(payload["eigenvalues"]),
            explained_variance_ratio=matrix_from_doc(payload["explained_variance_ratio"]),
        )

    def save(self, path: Union[str, Path], force: bool = False) -> Path:
        return save_document(path, "pca", self.to_payload(), force=force)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PCAModel":
        return cls.from_payload(load_document(path, "pca"))


def pca_fit(X: np.ndarray, k: int) -> PCAModel:
    """
    Fit the top-k principal components.

    Raises:
        InvalidParameterError: k outside [1, min(n - 1, d)]
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"pca_fit needs a 2-D matrix, got shape {X.shape}")
    n, d = X.shape
    if not 1 <= k <= min(n - 1, d):
        raise InvalidParameterError(f"k must be in [1, {min(n - 1, d)}] for a {n}x{d} matrix, got {k}")
    pca = PCA(n_components=k, svd_solver="full").fit(X)
    return PCAModel(
        mean=pca.mean_.copy(),
        components=pca.components_.T.copy(),
        eigenvalues=np.maximum(pca.explained_variance_, 0.0),
        explained_variance_ratio=pca.explained_variance_ratio_.copy(),
    )


def pca_transform(model: PCAModel, X: np.ndarray) -> np.ndarray:
    """(X - mean) @ components; accepts a single row or a matrix."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X.reshape(1, -1) if single else X
    if X2.shape[1] != model.mean.shape[0]:
        raise ShapeError(f"PCA fitted on {model.mean.shape[0]} features, got {X2.shape[1]}")
    Z = (X2 - model.mean) @ model.components
    return Z[0] if single else Z


def reconstruction_error(model: PCAModel, X: np.ndarray) -> float:
    """Mean squared reconstruction error of X from its k-component projection."""
    X = np.asarray(X, dtype=np.float64)
    Z = pca_transform(model, X)
    restored = Z @ model.components.T + model.mean
    return float(np.mean(np.sum((X - restored) ** 2, axis=1)))


# ==================== ESP ====================

@dataclass
class ESPModel:
    """
    Fitted Extended Sammon Projection.

    Attributes:
        anchors_high: (n, d) training rows in the original (normalized) space
        anchors_low: (n, m) their projected coordinates
        alpha: Step-size factor
        stress_trace: Stress after every accepted iteration (first entry = initial)
        distance_sum: c = sum_{i<j} d_ij over the anchors
        pca: Initialization map, also used to seed out-of-sample points
        anchor_indices: Row indices of the anchors in the matrix passed to esp_fit
        epsilon_guards: Number of coincident pairs replaced by epsilon
    """
    anchors_high: np.ndarray
    anchors_low: np.ndarray
    alpha: float
    stress_trace: np.ndarray
    distance_sum: float
    pca: PCAModel
    anchor_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    epsilon_guards: int = 0

    @property
    def target_dim(self) -> int:
        return int(self.anchors_low.shape[1])

    @property
    def input_dim(self) -> int:
        return int(self.anchors_high.shape[1])

    @property
    def final_stress(self) -> float:
        return float(self.stress_trace[-1])

    def transform(self, X: np.ndarray, max_iter: int = TRANSFORM_MAX_ITER) -> np.ndarray:
        """Out-of-sample mapping of every row of X (see esp_transform)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ShapeError(f"ESP fitted on {self.input_dim} features, got shape {X.shape}")
        out = np.empty((X.shape[0], self.target_dim))
        for start in range(0, X.shape[0], TRANSFORM_CHUNK):
            stop = start + TRANSFORM_CHUNK
            out[start:stop] = _place_points(self, X[start:stop], max_iter)
        return out

    def to_payload(self) -> dict:
        return {
            "alpha": self.alpha,
            "distance_sum": self.distance_sum,
            "epsilon_guards": self.epsilon_guards,
            "anchors_high": matrix_to_doc(self.anchors_high),
            "anchors_low": matrix_to_doc(self.anchors_low),
            "stress_trace": matrix_to_doc(self.stress_trace),
            "anchor_indices": [int(i) for i in self.anchor_indices],
            "pca": self.pca.to_payload(),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "ESPModel":
        return cls(
            anchors_high=matrix_from_doc(payload["anchors_high"]),
            anchors_low=matrix_from_doc(payload["anchors_low"]),
            alpha=float(payload["alpha"]),
            stress_trace=matrix_from_doc(payload["stress_trace"]),
            distance_sum=float(payload["distance_sum"]),
            pca=PCAModel.from_payload(payload["pca"]),
            anchor_indices=np.asarray(payload.get("anchor_indices", []), dtype=int),
            epsilon_guards=int(payload.get("epsilon_guards", 0)),
        )

    def save(self, path: Union[str, Path], force: bool = False) -> Path:
        return save_document(path, "esp", self.to_payload(), force=force)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ESPModel":
        return cls.from_payload(load_document(path, "esp"))


def _perturb_duplicates(X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Nudge repeated rows by 1e-9 x feature range so no two anchors coincide."""
    _, first_index = np.unique(X, axis=0, return_index=True)
    duplicates = np.setdiff1d(np.arange(X.shape[0]), first_index)
    if duplicates.size == 0:
        return X
    feature_range = np.ptp(X, axis=0)
    feature_range[feature_range <= 0] = 1.0
    perturbed = X.copy()
    perturbed[duplicates] += 1e-9 * feature_range * rng.standard_normal((duplicates.size, X.shape[1]))
    logger.debug("ESP: perturbed %d duplicate rows", duplicates.size)
    return perturbed


def _stress_of(Y: np.ndarray, D: np.ndarray, upper: Tuple[np.ndarray, np.ndarray], c: float) -> float:
    d_low = pdist(Y)
    d = D[upper]
    return float(np.sum((d - d_low) ** 2 / d) / c)


def esp_fit(X: np.ndarray, target_dim: int, alpha: float = DEFAULT_ALPHA,
            max_iter: int = 500, rel_tol: float = 1e-6,
            max_anchors: Optional[int] = None, max_halves: int = MAX_HALVES,
            seed: int = 0, init: str = "pca") -> ESPModel:
    """
    Fit an Extended Sammon Projection.

    Args:
        X: (n, d) normalized features
        target_dim: m, at most d
        alpha: Step-size factor in (0, 1]
        max_iter: Iteration cap
        rel_tol: Stop once (E_prev - E) / E_prev < rel_tol
        max_anchors: Fit on a seeded subsample of at most this many rows
        max_halves: Halvings of a rejected step before stopping
        seed: Subsample / duplicate-perturbation seed
        init: "pca" (default) or "random" (seeded Gaussian start scaled to the data)

    Returns:
        ESPModel whose stress_trace is non-increasing

    Raises:
        InvalidParameterError: n <= m, m > d or alpha outside (0, 1]
        DegenerateInputError: all rows identical
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"esp_fit needs a 2-D matrix, got shape {X.shape}")
    n_rows, d = X.shape
    if target_dim < 1 or target_dim > d:
        raise InvalidParameterError(f"target_dim must be in [1, {d}], got {target_dim}")
    if n_rows <= target_dim:
        raise InvalidParameterError(f"ESP needs more than {target_dim} rows, got {n_rows}")
    if not 0.0 < alpha <= 1.0:
        raise InvalidParameterError(f"alpha must be in (0, 1], got {alpha}")
    if np.all(np.ptp(X, axis=0) == 0):
        raise DegenerateInputError("all rows are identical; nothing to project")

    rng = np.random.default_rng(seed)
    anchor_indices = np.arange(n_rows)
    if max_anchors is not None and n_rows > max_anchors:
        anchor_indices = np.sort(rng.choice(n_rows, size=max_anchors, replace=False))
    anchors = X[anchor_indices]
    n = anchors.shape[0]
    if n <= target_dim:
        raise InvalidParameterError(f"ESP anchor set of {n} rows is too small for target_dim {target_dim}")

    working = _perturb_duplicates(anchors, rng)
    D_raw = pairwise_distances(working)
    D, guards = _guard_high_distances(D_raw)
    if guards:
        logger.warning("esp_fit: %d coincident pairs guarded with epsilon=%g", guards, EPSILON)
    upper = np.triu_indices(n, k=1)
    c = float(np.sum(D[upper]))

    pca = pca_fit(working, target_dim)
    if init == "pca":
        Y = pca_transform(pca, working)
    elif init == "random":
        spread = float(np.sqrt(np.mean(np.var(working, axis=0))))
        Y = spread * rng.standard_normal((n, target_dim))
    else:
        raise InvalidParameterError(f"init must be 'pca' or 'random', got {init!r}")
    E = _stress_of(Y, D, upper, c)
    trace = [E]

    for iteration in range(max_iter):
        if E <= 0.0:
            break
        gradient, hessian = stress_gradient(Y, D, c)
        step = -alpha * gradient / np.maximum(np.abs(hessian), EPSILON)

        accepted = False
        for _ in range(max_halves + 1):
            candidate = Y + step
            E_new = _stress_of(candidate, D, upper, c)
            if np.isfinite(E_new) and E_new <= E:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            logger.debug("esp_fit: step rejected after %d halvings at iteration %d", max_halves, iteration)
            break

        improvement = (E - E_new) / E if E > 0 else 0.0
        Y, E = candidate, E_new
        trace.append(E)
        if improvement < rel_tol:
            break

    logger.info("ESP fit: n=%d d=%d m=%d stress %.6g -> %.6g in %d iterations",
                n, d, target_dim, trace[0], trace[-1], len(trace) - 1)
    return ESPModel(
        anchors_high=anchors.copy(),
        anchors_low=Y,
        alpha=alpha,
        stress_trace=np.asarray(trace),
        distance_sum=c,
        pca=pca,
        anchor_indices=anchor_indices,
        epsilon_guards=guards,
    )


def _point_energy(D_new: np.ndarray, Y: np.ndarray, anchors_low: np.ndarray) -> np.ndarray:
    """Per-point stress terms sum_j (d_j - d*_j)^2 / d_j for a batch of placements."""
    D_low = cdist(Y, anchors_low)
    return np.sum((D_new - D_low) ** 2 / D_new, axis=1)


def _place_points(model: ESPModel, X: np.ndarray, max_iter: int) -> np.ndarray:
    """Pseudo-Newton placement of a batch of new points against fixed anchors."""
    A = model.anchors_low
    D_new = np.maximum(cdist(X, model.anchors_high), EPSILON)
    Y = pca_transform(model.pca, X)
    E = _point_energy(D_new, Y, A)
    active = np.ones(X.shape[0], dtype=bool)

    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        y = Y[idx]
        diff = y[:, None, :] - A[None, :, :]
        D_low = np.maximum(np.sqrt(np.sum(diff ** 2, axis=2)), EPSILON)
        weights = 1.0 / D_low - 1.0 / D_new[idx]
        weight_sum = weights.sum(axis=1, keepdims=True)
        gradient = -2.0 * (y * weight_sum - weights @ A)
        curvature = np.einsum("bj,bjk->bk", 1.0 / D_low ** 3, diff ** 2)
        hessian = -2.0 * (weight_sum - curvature)
        step = -model.alpha * gradient / np.maximum(np.abs(hessian), EPSILON)

        E_old = E[idx]
        accepted = np.zeros(idx.size, dtype=bool)
        best = y.copy()
        best_E = E_old.copy()
        for _ in range(MAX_HALVES + 1):
            pending = ~accepted
            if not pending.any():
                break
            candidate = y[pending] + step[pending]
            E_candidate = _point_energy(D_new[idx[pending]], candidate, A)
            ok = np.isfinite(E_candidate) & (E_candidate <= E_old[pending])
            rows = np.flatnonzero(pending)
            best[rows[ok]] = candidate[ok]
            best_E[rows[ok]] = E_candidate[ok]
            accepted[rows[ok]] = True
            step[rows[~ok]] *= 0.5

        Y[idx] = best
        E[idx] = best_E
        relative = np.where(E_old > 0, (E_old - best_E) / np.where(E_old > 0, E_old, 1.0), 0.0)
        # stalled or converged points stop moving
        active[idx[~accepted | (relative < 1e-12)]] = False
    return Y


def esp_transform(model: ESPModel, x_new: np.ndarray) -> np.ndarray:
    """
    Place one new point in the projected space.

    The point's coordinates minimize its Sammon stress terms against the
    fixed anchors, starting from its PCA coordinates; 100 pseudo-Newton
    iterations at most. Deterministic.
    """
    x_new = np.asarray(x_new, dtype=np.float64)
    if x_new.ndim != 1 or x_new.shape[0] != model.input_dim:
        raise ShapeError(f"ESP fitted on {model.input_dim} features, got shape {x_new.shape}")
    return model.transform(x_new.reshape(1, -1))[0]


# ==================== Method-agnostic wrapper ====================

class Projector:
    """
    NONE / PCA / ESP behind one fit/transform interface.

    Example:
        >>> projector = Projector(Method.ESP, 30, ESPSettings())
        >>> train_low = projector.fit_transform(train_values)
        >>> test_low = projector.transform(test_values)
    """

    def __init__(self, method: Union[Method, str] = Method.NONE, n_features: Optional[int] = None,
                 settings: Optional[ESPSettings] = None, seed: int = 0):
        self.method = Method(method)
        self.n_features = n_features
        self.settings = settings or ESPSettings()
        self.seed = seed
        self.pca: Optional[PCAModel] = None
        self.esp: Optional[ESPModel] = None
        if self.method != Method.NONE and (n_features is None or n_features < 1):
            raise InvalidParameterError(f"{self.method.value} needs a positive n_features")

    @property
    def output_dim(self) -> Optional[int]:
        return None if self.method == Method.NONE else self.n_features

    def fit_transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.method == Method.NONE:
            return X.copy()
        if self.method == Method.PCA:
            self.pca = pca_fit(X, self.n_features)
            return pca_transform(self.pca, X)

        s = self.settings
        self.esp = esp_fit(X, self.n_features, alpha=s.alpha, max_iter=s.max_iter, rel_tol=s.rel_tol,
                           max_anchors=s.max_anchors, max_halves=s.max_halves, seed=self.seed)
        out = np.empty((X.shape[0], self.n_features))
        is_anchor = np.zeros(X.shape[0], dtype=bool)
        is_anchor[self.esp.anchor_indices] = True
        out[self.esp.anchor_indices] = self.esp.anchors_low
        if (~is_anchor).any():
            out[~is_anchor] = self.esp.transform(X[~is_anchor])
        return out

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.method == Method.NONE:
            return X.copy()
        if self.method == Method.PCA:
            if self.pca is None:
                raise InvalidParameterError("projector is not fitted")
            return pca_transform(self.pca, X)
        if self.esp is None:
            raise InvalidParameterError("projector is not fitted")
        return self.esp.transform(X)

    def to_payload(self) -> dict:
        payload = {"method": self.method.value, "n_features": self.n_features}
        if self.pca is not None:
            payload["pca"] = self.pca.to_payload()
        if self.esp is not None:
            payload["esp"] = self.esp.to_payload()
        return payload

    @classmethod
    def from_payload(cls, payload: dict) -> "Projector":
        projector = cls(payload["method"], payload.get("n_features"))
        if "pca" in payload:
            projector.pca = PCAModel.from_payload(payload["pca"])
        if "esp" in payload:
            projector.esp = ESPModel.from_payload(payload["esp"])
            projector.settings.alpha = projector.esp.alpha
        return projector

    def save(self, path: Union[str, Path], force: bool = False) -> Path:
        return save_document(path, "projector", self.to_payload(), force=force)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Projector":
        return cls.from_payload(load_document(path, "projector"))
