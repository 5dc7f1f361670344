"""
Features - 72-dimensional time/frequency descriptors per window

Per axis (x, y, z), in this exact order, 24 values:

    mean, median, variance, std, iqr        basic statistics
    ac1..ac4                                autocorrelation, lags 1-4
    pac1..pac4                              partial autocorrelation, lags 1-4
    ar1..ar3                                AR(3) Yule-Walker coefficients
    ma1..ma3                                MA(3) innovations coefficients
    arma_phi, arma_theta                    ARMA(1,1) Hannan-Rissanen
    wav1..wav3                              Haar detail energy, levels 1-3

feature_schema() is the frozen contract for this layout.

Constant (zero-variance) axes never raise: their model coefficients are
zero and the corresponding fit carries degenerate=True, so idle segments
still give rectangular feature matrices.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import pywt
from scipy import linalg
from scipy import stats

from gaitid.errors import InvalidInputError, InvalidParameterError, ParseError, ShapeError
from gaitid.signal_io import MIN_WINDOW_LENGTH, Sensor, SubActivity, Window
from gaitid.storage import load_document, matrix_from_doc, matrix_to_doc, save_document, atomic_write

logger = logging.getLogger(__name__)

AXES = ("x", "y", "z")
AC_LAGS = 4
AR_ORDER = 3
MA_ORDER = 3
WAVELET_LEVELS = 3
PER_AXIS_NAMES = (
    ["mean", "median", "variance", "std", "iqr"]
    + [f"ac{k}" for k in range(1, AC_LAGS + 1)]
    + [f"pac{k}" for k in range(1, AC_LAGS + 1)]
    + [f"ar{k}" for k in range(1, AR_ORDER + 1)]
    + [f"ma{k}" for k in range(1, MA_ORDER + 1)]
    + ["arma_phi", "arma_theta"]
    + [f"wav{k}" for k in range(1, WAVELET_LEVELS + 1)]
)
FEATURES_PER_AXIS = len(PER_AXIS_NAMES)
N_FEATURES = FEATURES_PER_AXIS * len(AXES)
LABEL_COLUMNS = ["subject", "activity", "sensor"]

# Windows shorter than this use the reduced-reliability path (AR order 3 needs > 10 * 3 samples)
RELIABLE_WINDOW_LENGTH = 10 * AR_ORDER + 1

# Relative magnitude below which a demeaned signal counts as constant
_DEGENERATE_TOLERANCE = 1e-10


def feature_schema() -> List[str]:
    """The 72 "<axis>_<feature>" names, in extraction order."""
    return [f"{axis}_{name}" for axis in AXES for name in PER_AXIS_NAMES]


# ==================== Per-axis building blocks ====================

class BasicStats(NamedTuple):
    mean: float
    median: float
    variance: float
    std: float
    iqr: float


class Coefficients(NamedTuple):
    """A coefficient sequence plus the degenerate-signal flag."""
    values: np.ndarray
    degenerate: bool


@dataclass
class TimeSeriesFit:
    """
    Fitted time-series model.

    Attributes:
        ar_coefficients: phi_1..phi_p
        ma_coefficients: theta_1..theta_q
        noise_variance: Innovation variance estimate (0 for degenerate input)
        degenerate: True when the signal was constant or the system singular
    """
    ar_coefficients: np.ndarray
    ma_coefficients: np.ndarray
    noise_variance: float
    degenerate: bool = False

    @classmethod
    def zeros(cls, p: int, q: int) -> "TimeSeriesFit":
        return cls(np.zeros(p), np.zeros(q), 0.0, degenerate=True)


def _as_series(axis: Sequence[float], minimum: int, what: str) -> np.ndarray:
    x = np.asarray(axis, dtype=np.float64).ravel()
    if x.size < minimum:
        raise InvalidInputError(f"{what} needs at least {minimum} samples, got {x.size}")
    return x


def _is_degenerate(centered: np.ndarray, original: np.ndarray) -> bool:
    scale = float(np.max(np.abs(original))) if original.size else 0.0
    energy = float(centered @ centered)
    return energy <= centered.size * (_DEGENERATE_TOLERANCE * scale) ** 2


def _autocovariance(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased (1/n) sample autocovariances for lags 0..max_lag."""
    centered = x - x.mean()
    n = centered.size
    return np.array([centered[k:] @ centered[:n - k] for k in range(max_lag + 1)]) / n


def basic_stats(axis: Sequence[float]) -> BasicStats:
    """
    Mean, median, unbiased variance, std and interquartile range.

    Example:
        >>> basic_stats([1, 2, 3, 4, 5])
        BasicStats(mean=3.0, median=3.0, variance=2.5, std=1.5811..., iqr=2.0)
    """
    x = _as_series(axis, 2, "basic_stats")
    variance = float(np.var(x, ddof=1))
    return BasicStats(
        mean=float(np.mean(x)),
        median=float(np.median(x)),
        variance=variance,
        std=float(np.sqrt(variance)),
        iqr=float(stats.iqr(x, interpolation="linear")),
    )


def autocorrelation(axis: Sequence[float], max_lag: int) -> Coefficients:
    """
    Sample autocorrelation r(1)..r(max_lag).

    r(k) = sum_{t>k} (x_t - m)(x_{t-k} - m) / sum_t (x_t - m)^2

    Returns:
        Coefficients; all zero with degenerate=True for a constant sequence
    """
    x = _as_series(axis, 2, "autocorrelation")
    if max_lag < 1 or max_lag >= x.size:
        raise InvalidParameterError(f"max_lag must be in [1, {x.size - 1}], got {max_lag}")
    centered = x - x.mean()
    if _is_degenerate(centered, x):
        return Coefficients(np.zeros(max_lag), True)
    gamma = _autocovariance(x, max_lag)
    return Coefficients(gamma[1:] / gamma[0], False)


def _durbin_levinson(rho: np.ndarray) -> Tuple[np.ndarray, bool]:
    """
    Partial autocorrelations from autocorrelations rho[1..K] (rho[0] == 1 implied).

    Returns (pac, degenerate); degenerate when the recursion hits a
    perfectly predictable process.
    """
    max_lag = rho.size
    pac = np.zeros(max_lag)
    phi = np.zeros(0)
    variance = 1.0
    for k in range(1, max_lag + 1):
        numerator = rho[k - 1] - phi @ rho[k - 2::-1][:k - 1] if k > 1 else rho[0]
        if variance <= 1e-12:
            return pac, True
        a = numerator / variance
        phi = np.concatenate([phi - a * phi[::-1], [a]])
        variance *= (1.0 - a * a)
        pac[k - 1] = a
    return pac, False


def partial_autocorrelation(axis: Sequence[float], max_lag: int) -> Coefficients:
    """
    Partial autocorrelation via the Durbin-Levinson recursion on autocorrelation().

    PAC(1) always equals AC(1).
    """
    ac = autocorrelation(axis, max_lag)
    if ac.degenerate:
        return Coefficients(np.zeros(max_lag), True)
    pac, degenerate = _durbin_levinson(ac.values)
    if degenerate:
        logger.debug("Durbin-Levinson hit a singular step; trailing PAC set to zero")
    return Coefficients(pac, degenerate)


def _yule_walker(x: np.ndarray, order: int) -> TimeSeriesFit:
    centered = x - x.mean()
    if _is_degenerate(centered, x):
        return TimeSeriesFit.zeros(order, 0)
    gamma = _autocovariance(x, order)
    try:
        phi = linalg.solve_toeplitz(gamma[:order], gamma[1:order + 1])
    except (linalg.LinAlgError, ValueError):
        return TimeSeriesFit.zeros(order, 0)
    if not np.all(np.isfinite(phi)):
        return TimeSeriesFit.zeros(order, 0)
    sigma2 = float(gamma[0] - phi @ gamma[1:order + 1])
    return TimeSeriesFit(phi, np.zeros(0), max(sigma2, 0.0))


def fit_ar(axis: Sequence[float], p: int, strict: bool = True) -> TimeSeriesFit:
    """
    Yule-Walker AR(p) estimate from the sample autocovariances.

    Args:
        axis: Signal
        p: AR order
        strict: Enforce length > 10 * p (extraction relaxes this for short windows)

    Returns:
        TimeSeriesFit with p AR coefficients (zeros + degenerate flag for a
        constant signal or singular Toeplitz system)
    """
    if p < 1:
        raise InvalidParameterError(f"AR order must be positive, got {p}")
    minimum = 10 * p + 1 if strict else p + 2
    x = _as_series(axis, minimum, f"fit_ar(p={p})")
    return _yule_walker(x, p)


def _innovations_depth(n: int, q: int) -> int:
    return max(q, min(n // 4, 20))


def fit_ma(axis: Sequence[float], q: int) -> TimeSeriesFit:
    """
    MA(q) estimate with the innovations algorithm on sample autocovariances.

    The recursion is run to depth m = max(q, min(n // 4, 20)) and
    theta_{m,1..q} are returned; stopping at m = q would return the
    (biased) first-step estimates.
    """
    if q < 1:
        raise InvalidParameterError(f"MA order must be positive, got {q}")
    x = _as_series(axis, q + 2, f"fit_ma(q={q})")
    centered = x - x.mean()
    if _is_degenerate(centered, x):
        return TimeSeriesFit.zeros(0, q)

    depth = min(_innovations_depth(x.size, q), x.size - 1)
    gamma = _autocovariance(x, depth)
    theta = np.zeros((depth + 1, depth + 1))
    v = np.zeros(depth + 1)
    v[0] = gamma[0]
    for m in range(1, depth + 1):
        for k in range(m):
            acc = gamma[m - k]
            for j in range(k):
                acc -= theta[k, k - j] * theta[m, m - j] * v[j]
            if v[k] <= 1e-12 * gamma[0]:
                return TimeSeriesFit.zeros(0, q)
            theta[m, m - k] = acc / v[k]
        v[m] = gamma[0] - np.sum(theta[m, m:0:-1] ** 2 * v[:m])

    ma = theta[depth, 1:q + 1].copy()
    if not np.all(np.isfinite(ma)):
        return TimeSeriesFit.zeros(0, q)
    return TimeSeriesFit(np.zeros(0), ma, max(float(v[depth]), 0.0))


def _long_ar_order(n: int, p: int, q: int) -> int:
    return max(2 * max(p, q), min(int(np.log(n) ** 2), n // 4))


def fit_arma(axis: Sequence[float], p: int = 1, q: int = 1) -> TimeSeriesFit:
    """
    Two-stage Hannan-Rissanen ARMA(p, q) estimate.

    1. Fit a long AR model by Yule-Walker and keep its residuals as
       innovation estimates.
    2. Least-squares regression of x_t on x_{t-1..t-p} and the estimated
       innovations e_{t-1..t-q}.
    """
    if p < 1 or q < 1:
        raise InvalidParameterError(f"ARMA orders must be positive, got ({p}, {q})")
    x = _as_series(axis, p + q + 4, f"fit_arma({p},{q})")
    centered = x - x.mean()
    if _is_degenerate(centered, x):
        return TimeSeriesFit.zeros(p, q)

    n = x.size
    long_order = min(_long_ar_order(n, p, q), n - (p + q) - 3)
    long_fit = _yule_walker(x, long_order)
    if long_fit.degenerate:
        return TimeSeriesFit.zeros(p, q)

    lagged = np.column_stack([centered[long_order - j:n - j] for j in range(1, long_order + 1)])
    residuals = np.zeros(n)
    residuals[long_order:] = centered[long_order:] - lagged @ long_fit.ar_coefficients

    start = long_order + q
    rows = np.arange(max(start, p), n)
    design = np.column_stack(
        [centered[rows - j] for j in range(1, p + 1)] + [residuals[rows - j] for j in range(1, q + 1)]
    )
    target = centered[rows]
    try:
        coef, _, rank, _ = linalg.lstsq(design, target)
    except (linalg.LinAlgError, ValueError):
        return TimeSeriesFit.zeros(p, q)
    if rank < p + q or not np.all(np.isfinite(coef)):
        return TimeSeriesFit.zeros(p, q)
    sigma2 = float(np.mean((target - design @ coef) ** 2))
    return TimeSeriesFit(coef[:p].copy(), coef[p:].copy(), sigma2)


def wavelet_energies(axis: Sequence[float], levels: int = WAVELET_LEVELS) -> np.ndarray:
    """
    Mean squared Haar detail coefficient at levels 1..levels.

    Odd-length approximations are extended periodically (PyWavelets
    "periodization" mode).

    Raises:
        InvalidInputError: Fewer than 2**levels samples
    """
    if levels < 1:
        raise InvalidParameterError(f"levels must be positive, got {levels}")
    x = _as_series(axis, 2 ** levels, f"wavelet_energies(levels={levels})")
    # PyWavelets cannot take read-only contiguous buffers; hand it a writable copy
    coeffs = pywt.wavedec(np.array(x), "haar", mode="periodization", level=levels)
    # wavedec returns [cA_L, cD_L, ..., cD_1]
    details = coeffs[:0:-1]
    return np.array([float(np.mean(d ** 2)) for d in details])


# ==================== Feature vectors ====================

@dataclass(frozen=True, eq=False)
class FeatureVector:
    """
    72 features of one window plus its labels.

    Attributes:
        values: 72 finite floats in feature_schema() order
        subject_id, sub_activity, sensor, session: Labels from the window
        window_size: Window length in samples
        degenerate: True if any per-axis model fell back to zeros
        reduced_reliability: True for windows shorter than RELIABLE_WINDOW_LENGTH
    """
    values: np.ndarray
    subject_id: str
    sub_activity: SubActivity
    sensor: Sensor
    window_size: int
    session: str = "0"
    degenerate: bool = False
    reduced_reliability: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (N_FEATURES,):
            raise ShapeError(f"feature vector must have {N_FEATURES} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("feature vector contains non-finite values")
        object.__setattr__(self, "values", values)


def _axis_features(x: np.ndarray, reliable: bool) -> Tuple[List[float], bool]:
    summary = basic_stats(x)
    ac = autocorrelation(x, AC_LAGS)
    pac = partial_autocorrelation(x, AC_LAGS)
    ar = fit_ar(x, AR_ORDER, strict=reliable)
    ma = fit_ma(x, MA_ORDER)
    arma = fit_arma(x, 1, 1)
    energies = wavelet_energies(x, WAVELET_LEVELS)

    values = (
        list(summary)
        + ac.values.tolist()
        + pac.values.tolist()
        + ar.ar_coefficients.tolist()
        + ma.ma_coefficients.tolist()
        + [float(arma.ar_coefficients[0]), float(arma.ma_coefficients[0])]
        + energies.tolist()
    )
    degenerate = ac.degenerate or pac.degenerate or ar.degenerate or ma.degenerate or arma.degenerate
    return values, degenerate


def extract_feature_vector(window: Window) -> FeatureVector:
    """
    Compute the 72-feature vector of one window.

    Windows of at least RELIABLE_WINDOW_LENGTH samples use every estimator
    under its normal preconditions; shorter windows (down to 8 samples) are
    still processed and flagged reduced_reliability.

    Example:
        >>> vec = extract_feature_vector(window)
        >>> vec.values.shape
        (72,)
    """
    if window.length < MIN_WINDOW_LENGTH:
        raise InvalidInputError(f"window of {window.length} samples is below the minimum {MIN_WINDOW_LENGTH}")
    reliable = window.length >= RELIABLE_WINDOW_LENGTH

    values: List[float] = []
    degenerate = False
    for k in range(len(AXES)):
        axis_values, axis_degenerate = _axis_features(window.axis(k), reliable)
        values.extend(axis_values)
        degenerate = degenerate or axis_degenerate

    array = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        # Should not happen given the degenerate policies; keep matrices rectangular regardless
        logger.warning("Non-finite features in window %s@%d replaced by 0", window.subject_id, window.start)
        array = np.nan_to_num(array, nan=0.0, posinf=0.0, neginf=0.0)
        degenerate = True

    return FeatureVector(
        values=array,
        subject_id=window.subject_id,
        sub_activity=window.sub_activity,
        sensor=window.sensor,
        window_size=window.length,
        session=window.session,
        degenerate=degenerate,
        reduced_reliability=not reliable,
    )


# ==================== Feature matrices ====================

@dataclass(eq=False)
class FeatureMatrix:
    """
    Stack of feature rows with their labels.

    Attributes:
        values: (N, d) array; d = 72 before projection
        subject_ids, sub_activities, sensors, sessions: Per-row label arrays
        window_size: Shared window length (0 if unknown)
        columns: Column names (feature_schema() for raw features)
        normalization: Parameters used to scale ``values``, if any
        degenerate: Per-row degenerate flags
    """
    values: np.ndarray
    subject_ids: np.ndarray
    sub_activities: np.ndarray
    sensors: np.ndarray
    sessions: np.ndarray
    window_size: int = 0
    columns: List[str] = field(default_factory=feature_schema)
    normalization: Optional["NormalizerParams"] = None
    degenerate: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError(f"feature matrix must be 2-D, got shape {self.values.shape}")
        n = self.values.shape[0]
        for name in ("subject_ids", "sub_activities", "sensors", "sessions"):
            labels = np.asarray(getattr(self, name), dtype=object)
            if labels.shape != (n,):
                raise ShapeError(f"{name} has shape {labels.shape}, expected ({n},)")
            setattr(self, name, labels)
        if len(self.columns) != self.values.shape[1]:
            raise ShapeError(f"{len(self.columns)} column names for {self.values.shape[1]} columns")
        if self.degenerate is None:
            self.degenerate = np.zeros(n, dtype=bool)

    @classmethod
    def from_vectors(cls, vectors: Sequence[FeatureVector]) -> "FeatureMatrix":
        if not vectors:
            raise InvalidInputError("cannot build a feature matrix from zero windows")
        sizes = {v.window_size for v in vectors}
        if len(sizes) != 1:
            raise ShapeError(f"rows mix window sizes {sorted(sizes)}")
        return cls(
            values=np.vstack([v.values for v in vectors]),
            subject_ids=np.array([v.subject_id for v in vectors], dtype=object),
            sub_activities=np.array([v.sub_activity.value for v in vectors], dtype=object),
            sensors=np.array([v.sensor.value for v in vectors], dtype=object),
            sessions=np.array([v.session for v in vectors], dtype=object),
            window_size=sizes.pop(),
            degenerate=np.array([v.degenerate for v in vectors], dtype=bool),
        )

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.values.shape[1])

    def rows(self) -> List[FeatureVector]:
        """Raw-feature rows as FeatureVectors (only valid before projection)."""
        return [
            FeatureVector(self.values[i], self.subject_ids[i], SubActivity(self.sub_activities[i]),
                          Sensor(self.sensors[i]), self.window_size, self.sessions[i], bool(self.degenerate[i]))
            for i in range(len(self))
        ]

    def labels(self, target: str = "subject") -> np.ndarray:
        """Label column by name: "subject", "activity", "sensor" or "session"."""
        return {
            "subject": self.subject_ids,
            "activity": self.sub_activities,
            "sensor": self.sensors,
            "session": self.sessions,
        }[target]

    def subset(self, indices: Union[Sequence[int], np.ndarray]) -> "FeatureMatrix":
        idx = np.asarray(indices)
        return FeatureMatrix(
            values=self.values[idx],
            subject_ids=self.subject_ids[idx],
            sub_activities=self.sub_activities[idx],
            sensors=self.sensors[idx],
            sessions=self.sessions[idx],
            window_size=self.window_size,
            columns=list(self.columns),
            normalization=self.normalization,
            degenerate=self.degenerate[idx],
        )

    def with_values(self, values: np.ndarray, columns: Optional[List[str]] = None,
                    normalization: Optional["NormalizerParams"] = None) -> "FeatureMatrix":
        values = np.asarray(values, dtype=np.float64)
        if columns is None:
            columns = list(self.columns) if values.shape[1] == self.n_features else \
                [f"c{k}" for k in range(1, values.shape[1] + 1)]
        return FeatureMatrix(
            values=values,
            subject_ids=self.subject_ids,
            sub_activities=self.sub_activities,
            sensors=self.sensors,
            sessions=self.sessions,
            window_size=self.window_size,
            columns=columns,
            normalization=normalization,
            degenerate=self.degenerate,
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=self.columns)
        frame["subject"] = self.subject_ids
        frame["activity"] = self.sub_activities
        frame["sensor"] = self.sensors
        return frame

    def save_csv(self, path: Union[str, Path], force: bool = False) -> Path:
        """Write one row per window: feature columns then subject,activity,sensor."""
        with atomic_write(path, force=force) as fh:
            self.to_frame().to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")
        return Path(path)

    @classmethod
    def load_csv(cls, path: Union[str, Path], window_size: int = 0) -> "FeatureMatrix":
        frame = pd.read_csv(path, dtype={c: str for c in LABEL_COLUMNS})
        missing = [c for c in LABEL_COLUMNS if c not in frame.columns]
        if missing:
            raise ParseError(f"feature CSV lacks label columns {missing}", path=str(path))
        columns = [c for c in frame.columns if c not in LABEL_COLUMNS]
        values = frame[columns].to_numpy(dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise ParseError("feature CSV contains missing or non-finite values", path=str(path))
        return cls(
            values=values,
            subject_ids=frame["subject"].to_numpy(dtype=object),
            sub_activities=frame["activity"].to_numpy(dtype=object),
            sensors=frame["sensor"].to_numpy(dtype=object),
            sessions=np.full(len(frame), "0", dtype=object),
            window_size=window_size,
            columns=columns,
        )


def extract_features(windows: Sequence[Window], threads: int = 1) -> FeatureMatrix:
    """Extract every window (optionally in parallel) into a FeatureMatrix, order preserved."""
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vectors = list(pool.map(extract_feature_vector, windows))
    else:
        vectors = [extract_feature_vector(w) for w in windows]
    matrix = FeatureMatrix.from_vectors(vectors)
    n_degenerate = int(matrix.degenerate.sum())
    if n_degenerate:
        logger.info("%d of %d windows had degenerate axes", n_degenerate, len(matrix))
    return matrix


# ==================== Normalization ====================

@dataclass
class NormalizerParams:
    """Per-column (min, max) fitted on training rows."""
    mins: np.ndarray
    maxs: np.ndarray

    @property
    def n_features(self) -> int:
        return int(self.mins.shape[0])

    def save(self, path: Union[str, Path], force: bool = False) -> Path:
        return save_document(path, "normalizer", self.to_payload(), force=force)

    def to_payload(self) -> dict:
        return {"mins": matrix_to_doc(self.mins), "maxs": matrix_to_doc(self.maxs)}

    @classmethod
    def from_payload(cls, payload: dict) -> "NormalizerParams":
        return cls(matrix_from_doc(payload["mins"]), matrix_from_doc(payload["maxs"]))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "NormalizerParams":
        return cls.from_payload(load_document(path, "normalizer"))


def fit_normalizer(train: Union[FeatureMatrix, np.ndarray]) -> NormalizerParams:
    """
    Fit per-column min-max scaling on training rows only.

    Raises:
        InvalidInputError: Empty training matrix
    """
    values = train.values if isinstance(train, FeatureMatrix) else np.asarray(train, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] == 0:
        raise InvalidInputError("cannot fit a normalizer on an empty matrix")
    return NormalizerParams(mins=values.min(axis=0), maxs=values.max(axis=0))


def _scale(params: NormalizerParams, values: np.ndarray) -> np.ndarray:
    if values.ndim != 2 or values.shape[1] != params.n_features:
        raise ShapeError(f"normalizer fitted on {params.n_features} columns, got shape {values.shape}")
    span = params.maxs - params.mins
    constant = span <= 0
    safe_span = np.where(constant, 1.0, span)
    scaled = (values - params.mins) / safe_span
    scaled[:, constant] = 0.5
    return np.clip(scaled, 0.0, 1.0)


def apply_normalizer(params: NormalizerParams, matrix: Union[FeatureMatrix, np.ndarray]):
    """
    Scale to [0, 1] with fitted params; constant training columns map to 0.5,
    out-of-range test values are clipped.

    Returns the same kind it was given (FeatureMatrix or ndarray).

    Example:
        training column [2, 4, 6] -> [0, 0.5, 1]; test value 8 -> 1.0
    """
    if isinstance(matrix, FeatureMatrix):
        return matrix.with_values(_scale(params, matrix.values), columns=list(matrix.columns),
                                  normalization=params)
    return _scale(params, np.asarray(matrix, dtype=np.float64))
