"""
Evaluation - Splits, two-stage identification, confidence intervals and experiments

Every fitted object (normalizer, PCA/ESP, PSO-selected kernel parameters,
KELM) sees only the training rows of its split. Test rows are transformed
with the fitted models and scored once.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats
from sklearn.model_selection import LeaveOneGroupOut, StratifiedKFold

from gaitid.errors import ConfigError, InvalidInputError, InvalidParameterError, StratificationError
from gaitid.features import FeatureMatrix, NormalizerParams, apply_normalizer, extract_features, fit_normalizer
from gaitid.kelm import KELMClassifier, KELMModel, KernelParams, kelm_predict, kelm_train
from gaitid.pipeline_config import LosoMode, PipelineConfig, Protocol, Target
from gaitid.projection import Method, Projector
from gaitid.pso import tune_kernel
from gaitid.signal_io import (SignalRecording, load_dataset, moving_average_filter, segment_windows)
from gaitid.stage_timer import StageTimer, timed
from gaitid.storage import load_document, save_document, write_text
from gaitid.synthetic import generate_from_spec

logger = logging.getLogger(__name__)

LEGITIMATE = "legitimate"
IMPOSTOR = "impostor"


# ==================== Splits ====================

@dataclass(frozen=True, eq=False)
class Split:
    """
    Train/test partition over the rows of a FeatureMatrix.

    Attributes:
        train_indices: Sorted training row indices
        test_indices: Sorted test row indices
        descriptor: Human-readable name ("fold 3/10", "held-out subject u02", ...)
    """
    train_indices: np.ndarray
    test_indices: np.ndarray
    descriptor: str

    def __post_init__(self):
        train = np.sort(np.asarray(self.train_indices, dtype=int))
        test = np.sort(np.asarray(self.test_indices, dtype=int))
        if train.size == 0 or test.size == 0:
            raise InvalidInputError(f"split {self.descriptor!r} has an empty train or test set")
        if np.intersect1d(train, test).size:
            raise InvalidInputError(f"split {self.descriptor!r} has overlapping train and test rows")
        object.__setattr__(self, "train_indices", train)
        object.__setattr__(self, "test_indices", test)


def stratified_kfold(labels: Sequence, k: int, seed: int = 0) -> List[Split]:
    """
    Stratified k-fold splits (shuffled, deterministic under seed).

    Raises:
        InvalidParameterError: k < 2
        StratificationError: some class has fewer than k members (names the class)
    """
    labels = np.asarray(labels)
    if k < 2:
        raise InvalidParameterError(f"k must be at least 2, got {k}")
    classes, counts = np.unique(labels, return_counts=True)
    for label, count in zip(classes, counts):
        if count < k:
            raise StratificationError(f"class {label!r} has {count} members, fewer than k={k}", label=label)
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    return [
        Split(train, test, f"fold {i}/{k}")
        for i, (train, test) in enumerate(splitter.split(np.zeros(labels.shape[0]), labels), start=1)
    ]


def loso_splits(subject_ids: Sequence) -> List[Split]:
    """
    One split per subject; that subject's rows form the test set.

    Raises:
        InvalidInputError: fewer than 2 distinct subjects
    """
    groups = np.asarray(subject_ids)
    subjects = np.unique(groups)
    if subjects.shape[0] < 2:
        raise InvalidInputError(f"leave-one-subject-out needs at least 2 subjects, got {subjects.tolist()}")
    logo = LeaveOneGroupOut()
    return [
        Split(train, test, f"held-out subject {groups[test[0]]}")
        for train, test in logo.split(np.zeros(groups.shape[0]), groups=groups)
    ]


def session_splits(sessions: Sequence) -> List[Split]:
    """Leave-one-session-out: every distinct session id is held out once."""
    groups = np.asarray(sessions)
    if np.unique(groups).shape[0] < 2:
        raise InvalidInputError("session hold-out needs at least 2 distinct sessions")
    logo = LeaveOneGroupOut()
    return [
        Split(train, test, f"held-out session {groups[test[0]]}")
        for train, test in logo.split(np.zeros(groups.shape[0]), groups=groups)
    ]


# ==================== Statistics ====================

def confidence_interval(values: Sequence[float], level: float = 0.99) -> Tuple[float, float]:
    """
    Student-t interval for the mean.

    Returns:
        (mean, halfwidth) with halfwidth = t_{(1+level)/2, n-1} * s / sqrt(n)

    Example:
        {0.96, 0.98, 1.00} at 0.99 -> (0.98, ~0.1146)
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] < 2:
        raise InvalidInputError(f"confidence_interval needs at least 2 values, got {values.shape[0]}")
    if not 0.0 < level < 1.0:
        raise InvalidParameterError(f"level must be in (0, 1), got {level}")
    n = values.shape[0]
    mean = float(np.mean(values))
    spread = float(np.std(values, ddof=1))
    quantile = float(stats.t.ppf((1.0 + level) / 2.0, n - 1))
    return mean, quantile * spread / np.sqrt(n)


# ==================== Two-stage identification ====================

class _ConstantModel:
    def __init__(self, label):
        self.label = label

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(X).shape[0], self.label, dtype=object)


def _fit_labels(X: np.ndarray, labels: np.ndarray, params: KernelParams):
    distinct = np.unique(labels)
    if distinct.shape[0] == 1:
        return _ConstantModel(distinct[0])
    return KELMClassifier(params).fit(X, labels)


@dataclass
class TwoStageResult:
    """
    Per-row output of the activity-then-subject cascade.

    Attributes:
        activities: Stage-1 sub-activity predictions
        subjects: Stage-2 subject predictions
        legitimate: subjects == claimed subject (None when no claims were given)
        fallback: Rows scored by the global subject model
    """
    activities: np.ndarray
    subjects: np.ndarray
    legitimate: Optional[np.ndarray]
    fallback: np.ndarray

    @property
    def fallback_count(self) -> int:
        return int(np.count_nonzero(self.fallback))


class TwoStageIdentifier:
    """
    Stage 1 recognizes the sub-activity; stage 2 identifies the subject with a
    model trained on that sub-activity only. Sub-activities without a usable
    stage-2 model (fewer than two subjects) fall back to a global subject model.
    """

    def __init__(self, params: Optional[KernelParams] = None):
        self.params = params or KernelParams()
        self.stage_one = None
        self.stage_two: Dict[str, Any] = {}
        self.activities_seen: np.ndarray = np.array([], dtype=object)
        self._global = None
        self._train: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def fit(self, X: np.ndarray, activities: Sequence, subjects: Sequence) -> "TwoStageIdentifier":
        X = np.asarray(X, dtype=np.float64)
        activities = np.asarray(activities, dtype=object)
        subjects = np.asarray(subjects, dtype=object)
        self.activities_seen = np.unique(activities)
        self.stage_one = _fit_labels(X, activities, self.params)
        self.stage_two = {}
        for activity in self.activities_seen:
            rows = activities == activity
            if np.unique(subjects[rows]).shape[0] >= 2:
                self.stage_two[activity] = KELMClassifier(self.params).fit(X[rows], subjects[rows])
        self._train = (X, subjects)
        self._global = None
        return self

    def _global_model(self):
        if self._global is None:
            X, subjects = self._train
            self._global = _fit_labels(X, subjects, self.params)
        return self._global

    def predict_activities(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.stage_one.predict(X), dtype=object)

    def predict_subjects(self, X: np.ndarray, activities: Sequence) -> Tuple[np.ndarray, np.ndarray]:
        """Stage 2 alone, routed by the given activities."""
        X = np.asarray(X, dtype=np.float64)
        activities = np.asarray(activities, dtype=object)
        subjects = np.empty(X.shape[0], dtype=object)
        fallback = np.zeros(X.shape[0], dtype=bool)
        for activity in np.unique(activities):
            rows = activities == activity
            model = self.stage_two.get(activity)
            if model is None:
                model = self._global_model()
                fallback[rows] = True
            subjects[rows] = model.predict(X[rows])
        if fallback.any():
            logger.warning("two-stage: %d rows fell back to the global subject model", int(fallback.sum()))
        return subjects, fallback

    def predict(self, X: np.ndarray, claimed_subjects: Optional[Sequence] = None) -> TwoStageResult:
        activities = self.predict_activities(X)
        subjects, fallback = self.predict_subjects(X, activities)
        legitimate = None
        if claimed_subjects is not None:
            legitimate = subjects == np.asarray(claimed_subjects, dtype=object)
        return TwoStageResult(activities, subjects, legitimate, fallback)


def identify_two_stage(train: FeatureMatrix, test: FeatureMatrix, params: Optional[KernelParams] = None,
                       claimed_subjects: Optional[Sequence] = None) -> TwoStageResult:
    """
    Activity-then-subject identification of every test row.

    Args:
        train: Training rows (already normalized / projected)
        test: Rows to identify
        params: Kernel parameters for every KELM in the cascade
        claimed_subjects: Per-row claimed identity; sets ``legitimate``

    Raises:
        InvalidInputError: test holds a sub-activity the training rows lack
    """
    missing = sorted(set(test.sub_activities) - set(train.sub_activities))
    if missing:
        raise InvalidInputError(f"training rows cover no examples of sub-activities {missing}")
    identifier = TwoStageIdentifier(params).fit(train.values, train.sub_activities, train.subject_ids)
    return identifier.predict(test.values, claimed_subjects)


# ==================== Reports ====================

@dataclass
class EvalReport:
    """
    Result of one experiment.

    Attributes:
        name: Experiment name
        protocol: Protocol descriptor ("KFOLD-10", "LOSO-SESSION", "LOSO-SUBJECT")
        target: What was classified
        split_descriptors: One entry per reported accuracy
        accuracies: Per-split (or per-user) test accuracy
        train_accuracies: Matching training accuracy
        mean_accuracy: Arithmetic mean of accuracies
        ci_halfwidth: Half-width of the ci_level Student-t interval
        timings: StageTimer summary (seconds)
        config: Configuration echo
        per_class_accuracy: Accuracy per true class over all test rows
        fallback_count: Rows routed to the global model by the two-stage cascade
        kernel_params: Kernel parameters used per split
        split_halfwidths: Per-user interval half-width over held-out sessions
            (LOSO-SESSION only; empty otherwise)
    """
    name: str
    protocol: str
    target: str
    split_descriptors: List[str]
    accuracies: List[float]
    train_accuracies: List[float]
    mean_accuracy: float
    ci_halfwidth: float
    ci_level: float
    timings: Dict[str, Dict[str, float]]
    config: Dict[str, Any]
    n_windows: int
    feature_dim: int
    per_class_accuracy: Dict[str, float] = field(default_factory=dict)
    fallback_count: int = 0
    kernel_params: List[Dict[str, float]] = field(default_factory=list)
    split_halfwidths: List[float] = field(default_factory=list)

    def stage_seconds(self, stage: str) -> float:
        return float(self.timings.get(stage, {}).get("total_s", 0.0))

    @property
    def classification_seconds(self) -> float:
        return self.stage_seconds("train") + self.stage_seconds("predict")

    def to_dict(self, include_timings: bool = True) -> Dict[str, Any]:
        data = {
            "name": self.name,
            "protocol": self.protocol,
            "target": self.target,
            "n_windows": self.n_windows,
            "feature_dim": self.feature_dim,
            "splits": [
                {"descriptor": d, "accuracy": a, "train_accuracy": t}
                for d, a, t in zip(self.split_descriptors, self.accuracies, self.train_accuracies)
            ],
            "split_halfwidths": self.split_halfwidths,
            "mean_accuracy": self.mean_accuracy,
            "ci_level": self.ci_level,
            "ci_halfwidth": self.ci_halfwidth,
            "per_class_accuracy": self.per_class_accuracy,
            "fallback_count": self.fallback_count,
            "kernel_params": self.kernel_params,
            "config": self.config,
        }
        if include_timings:
            data["timings"] = self.timings
        return data

    def to_json(self, include_timings: bool = True) -> str:
        return json.dumps(self.to_dict(include_timings), indent=2)

    def save_json(self, path: Union[str, Path], force: bool = False) -> Path:
        return write_text(path, self.to_json() + "\n", force=force)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvalReport":
        splits = data.get("splits", [])
        return cls(
            name=data["name"],
            protocol=data["protocol"],
            target=data["target"],
            split_descriptors=[s["descriptor"] for s in splits],
            accuracies=[float(s["accuracy"]) for s in splits],
            train_accuracies=[float(s["train_accuracy"]) for s in splits],
            mean_accuracy=float(data["mean_accuracy"]),
            ci_halfwidth=float(data["ci_halfwidth"]),
            ci_level=float(data["ci_level"]),
            timings=data.get("timings", {}),
            config=data.get("config", {}),
            n_windows=int(data["n_windows"]),
            feature_dim=int(data["feature_dim"]),
            per_class_accuracy=data.get("per_class_accuracy", {}),
            fallback_count=int(data.get("fallback_count", 0)),
            kernel_params=data.get("kernel_params", []),
            split_halfwidths=[float(h) for h in data.get("split_halfwidths", [])],
        )


# ==================== Data preparation ====================

def load_recordings(config: PipelineConfig, threads: int = 1) -> List[SignalRecording]:
    """Load (or generate) and filter the recordings an experiment runs on."""
    if config.dataset_path is None:
        recordings = generate_from_spec(config.synthetic)
    else:
        recordings = load_dataset(config.dataset_path, config.layout, sensors=config.sensors,
                                  sub_activities=config.sub_activities or None, threads=threads)
    wanted_sensors = set(config.sensors)
    wanted_activities = set(config.sub_activities) or None
    kept = [r for r in recordings
            if r.sensor in wanted_sensors and (wanted_activities is None or r.sub_activity in wanted_activities)]
    if not kept:
        raise ConfigError(f"no recordings match sensors {[s.value for s in config.sensors]} "
                          f"and sub-activities {[a.value for a in config.sub_activities] or 'all'}")
    return kept


def extract_recordings(recordings: Sequence[SignalRecording], window_size: int, overlap: float,
                       filter_order: int = 3, threads: int = 1) -> FeatureMatrix:
    """Smooth, window and extract every recording into one FeatureMatrix."""
    windows = []
    for recording in recordings:
        if recording.n_samples < window_size:
            logger.debug("skipping %s: %d samples < window %d", recording.label, recording.n_samples, window_size)
            continue
        smoothed = moving_average_filter(recording, filter_order) if filter_order > 1 else recording
        windows.extend(segment_windows(smoothed, window_size, overlap))
    if not windows:
        raise InvalidInputError(f"no recording is long enough for window size {window_size}")
    return extract_features(windows, threads=threads)


def prepare_features(config: PipelineConfig, timer: Optional[StageTimer] = None,
                     threads: int = 1) -> FeatureMatrix:
    """
    Load recordings and extract features; only extraction is timed.

    Raises:
        ConfigError: the window is longer than every recording
    """
    recordings = load_recordings(config, threads)
    longest = max(r.n_samples for r in recordings)
    if config.window_size > longest:
        raise ConfigError(f"window_size {config.window_size} exceeds the longest recording ({longest} samples)")
    matrix, _ = timed("extraction", lambda: extract_recordings(
        recordings, config.window_size, config.effective_overlap, config.filter_order, threads), timer)
    logger.info("%s: %d windows of %d samples", config.name, len(matrix), config.window_size)
    return matrix


# ==================== Split evaluation ====================

@dataclass
class SplitOutcome:
    descriptor: str
    accuracy: float
    train_accuracy: float
    predictions: np.ndarray
    truth: np.ndarray
    timer: StageTimer
    params: KernelParams
    fallback_count: int = 0


def project_split(train_values: np.ndarray, test_values: np.ndarray, config: PipelineConfig,
                  timer: Optional[StageTimer] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Normalize on the training rows, then fit PCA/ESP on them and map both sides."""
    def run():
        normalizer = fit_normalizer(train_values)
        train_scaled = apply_normalizer(normalizer, train_values)
        test_scaled = apply_normalizer(normalizer, test_values)
        if config.method == Method.NONE:
            return train_scaled, test_scaled
        projector = Projector(config.method, config.n_features, config.esp, seed=config.seed)
        return projector.fit_transform(train_scaled), projector.transform(test_scaled)

    if config.method == Method.NONE:
        return run()
    result, _ = timed("projection", run, timer)
    return result


def _select_params(train_x: np.ndarray, y_train: np.ndarray, config: PipelineConfig,
                   timer: Optional[StageTimer]) -> KernelParams:
    if not config.use_pso:
        return config.kernel
    pso_config = replace(config.pso, seed=config.seed)
    (params, _, _), _ = timed("pso", lambda: tune_kernel(train_x, y_train, pso_config, config.pso_max_rows), timer)
    return params


def classify_split(train_x: np.ndarray, y_train: np.ndarray, test_x: np.ndarray, y_test: np.ndarray,
                   config: PipelineConfig, timer: StageTimer, descriptor: str = "",
                   train_activities: Optional[np.ndarray] = None) -> SplitOutcome:
    """Select kernel parameters, train, predict and score one split."""
    params = _select_params(train_x, y_train, config, timer)
    fallback_count = 0
    if config.target == Target.TWO_STAGE:
        model, _ = timed("train", lambda: TwoStageIdentifier(params).fit(train_x, train_activities, y_train), timer)
        result, _ = timed("predict", lambda: model.predict(test_x), timer)
        predictions = result.subjects
        fallback_count = result.fallback_count
        train_predictions = model.predict(train_x).subjects
    else:
        model, _ = timed("train", lambda: KELMClassifier(params).fit(train_x, y_train), timer)
        predictions, _ = timed("predict", lambda: model.predict(test_x), timer)
        train_predictions = model.predict(train_x)
    return SplitOutcome(
        descriptor=descriptor,
        accuracy=float(np.mean(predictions == y_test)),
        train_accuracy=float(np.mean(train_predictions == y_train)),
        predictions=np.asarray(predictions, dtype=object),
        truth=np.asarray(y_test, dtype=object),
        timer=timer,
        params=params,
        fallback_count=fallback_count,
    )


def target_labels(matrix: FeatureMatrix, target: Target) -> np.ndarray:
    return matrix.sub_activities if target == Target.SUB_ACTIVITY else matrix.subject_ids


def evaluate_split(matrix: FeatureMatrix, split: Split, config: PipelineConfig,
                   labels: Optional[np.ndarray] = None) -> SplitOutcome:
    """
    Run normalize -> project -> (PSO) -> train -> predict on one split.

    Args:
        matrix: Raw features of every row
        split: Rows to train and test on
        config: Experiment configuration
        labels: Per-row labels (defaults to the config target's column)
    """
    labels = target_labels(matrix, config.target) if labels is None else np.asarray(labels, dtype=object)
    timer = StageTimer()
    train_values = matrix.values[split.train_indices]
    test_values = matrix.values[split.test_indices]
    train_x, test_x = project_split(train_values, test_values, config, timer)
    return classify_split(train_x, labels[split.train_indices], test_x, labels[split.test_indices], config,
                          timer, split.descriptor, train_activities=matrix.sub_activities[split.train_indices])


def _map(function: Callable, items: Sequence, threads: int) -> List:
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(function, items))
    return [function(item) for item in items]


def _halfwidth(values: Sequence[float], level: float) -> float:
    if len(values) < 2:
        logger.warning("only %d accuracy value(s); reporting a zero-width interval", len(values))
        return 0.0
    return float(confidence_interval(values, level)[1])


def _per_class(outcomes: Sequence[SplitOutcome]) -> Dict[str, float]:
    truth = np.concatenate([o.truth for o in outcomes])
    predicted = np.concatenate([o.predictions for o in outcomes])
    return {str(label): float(np.mean(predicted[truth == label] == label)) for label in np.unique(truth)}


def _usable_users(matrix: FeatureMatrix, split: Split, users: np.ndarray) -> List:
    """Users with both legitimate and impostor training rows and at least one test row in this split."""
    train_ids = matrix.subject_ids[split.train_indices]
    test_ids = set(matrix.subject_ids[split.test_indices].tolist())
    usable = []
    for user in users:
        own = train_ids == user
        if own.any() and not own.all() and user in test_ids:
            usable.append(user)
        else:
            logger.debug("session hold-out: skipping user %s for %s (missing training or test rows)",
                         user, split.descriptor)
    return usable


def _session_mode(matrix: FeatureMatrix, config: PipelineConfig, threads: int):
    """
    Per-user legitimate-vs-rest accuracy over held-out sessions.

    A user is scored on a split only when the split leaves them rows on both
    sides. Users recorded in a single session have no such split; they are
    logged and left out of the per-user results.

    Raises:
        ConfigError: no user has a split with rows on both sides
    """
    splits = session_splits(matrix.sessions)
    plan = [(split, _usable_users(matrix, split, np.unique(matrix.subject_ids))) for split in splits]
    users = [u for u in np.unique(matrix.subject_ids) if any(u in usable for _, usable in plan)]
    skipped = sorted(set(map(str, matrix.subject_ids)) - set(map(str, users)))
    if not users:
        raise ConfigError("session hold-out: no user appears in two or more sessions")
    if skipped:
        logger.warning("session hold-out: users %s appear in a single session and are not scored", skipped)

    def run_split(item) -> Dict[Any, SplitOutcome]:
        split, usable = item
        if not usable:
            return {}
        timer = StageTimer()
        train_x, test_x = project_split(matrix.values[split.train_indices],
                                        matrix.values[split.test_indices], config, timer)
        outcomes = {}
        for user in usable:
            labels = np.where(matrix.subject_ids == user, LEGITIMATE, IMPOSTOR).astype(object)
            outcomes[user] = classify_split(train_x, labels[split.train_indices], test_x,
                                            labels[split.test_indices], config, timer,
                                            f"user {user}, {split.descriptor}")
        return outcomes

    per_split = _map(run_split, plan, threads)
    descriptors, accuracies, train_accuracies, halfwidths, per_user = [], [], [], [], {}
    for user in users:
        user_outcomes = [outcomes[user] for outcomes in per_split if user in outcomes]
        descriptors.append(f"user {user}")
        session_accuracies = [o.accuracy for o in user_outcomes]
        accuracies.append(float(np.mean(session_accuracies)))
        halfwidths.append(_halfwidth(session_accuracies, config.ci_level))
        train_accuracies.append(float(np.mean([o.train_accuracy for o in user_outcomes])))
        per_user[str(user)] = accuracies[-1]
    flat = [o for outcomes in per_split for o in outcomes.values()]
    return descriptors, accuracies, train_accuracies, halfwidths, per_user, flat


def run_experiment(config: PipelineConfig, threads: int = 1,
                   features: Optional[FeatureMatrix] = None) -> EvalReport:
    """
    Run one experiment end to end.

    Args:
        config: Validated before any computation
        threads: Splits evaluated in parallel
        features: Pre-extracted raw features (skips loading and extraction)

    Raises:
        ConfigError: invalid configuration, or a window larger than the recordings
    """
    config.validate()
    timer = StageTimer()
    matrix = features if features is not None else prepare_features(config, timer, threads)

    if config.protocol == Protocol.LOSO and config.loso_mode == LosoMode.SESSION:
        protocol = "LOSO-SESSION"
        (descriptors, accuracies, train_accuracies, split_halfwidths, per_class,
         outcomes) = _session_mode(matrix, config, threads)
        target = "LEGITIMATE_VS_REST"
    else:
        split_halfwidths = []
        if config.protocol == Protocol.LOSO:
            protocol = "LOSO-SUBJECT"
            activities = np.unique(matrix.sub_activities)
            if activities.shape[0] < 2:
                raise ConfigError(f"leave-one-subject-out recognizes sub-activities but the data holds only "
                                  f"{[str(a) for a in activities]}; use --loso-mode session or a dataset "
                                  f"with several pockets")
            config = replace(config, target=Target.SUB_ACTIVITY)
            splits = loso_splits(matrix.subject_ids)
        else:
            protocol = f"KFOLD-{config.folds}"
            splits = stratified_kfold(target_labels(matrix, config.target), config.folds, config.seed)
        outcomes = _map(lambda split: evaluate_split(matrix, split, config), splits, threads)
        descriptors = [o.descriptor for o in outcomes]
        accuracies = [o.accuracy for o in outcomes]
        train_accuracies = [o.train_accuracy for o in outcomes]
        per_class = _per_class(outcomes)
        target = config.target.value

    # session mode shares one timer across the users of a split
    for split_timer in {id(o.timer): o.timer for o in outcomes}.values():
        timer.merge(split_timer)

    report = EvalReport(
        name=config.name,
        protocol=protocol,
        target=target,
        split_descriptors=descriptors,
        accuracies=accuracies,
        train_accuracies=train_accuracies,
        mean_accuracy=float(np.mean(accuracies)),
        ci_halfwidth=_halfwidth(accuracies, config.ci_level),
        ci_level=config.ci_level,
        timings=timer.get_summary(),
        config=config.to_dict(),
        n_windows=len(matrix),
        feature_dim=config.feature_dim,
        per_class_accuracy=per_class,
        fallback_count=int(sum(o.fallback_count for o in outcomes)),
        kernel_params=[o.params.to_dict() for o in outcomes],
        split_halfwidths=split_halfwidths,
    )
    logger.info("%s: %s accuracy %.4f +/- %.4f", config.name, protocol, report.mean_accuracy, report.ci_halfwidth)
    return report


# ==================== Trained bundle ====================

class TrainedPipeline:
    """
    Normalizer + projector + KELM fitted on one feature matrix, persisted as
    a single "bundle" document for `train --save` / `evaluate --model`.
    """

    def __init__(self, normalizer: NormalizerParams, projector: Projector, model: KELMModel, target: Target):
        self.normalizer = normalizer
        self.projector = projector
        self.model = model
        self.target = Target(target)

    @classmethod
    def fit(cls, matrix: FeatureMatrix, config: PipelineConfig) -> "TrainedPipeline":
        if config.target == Target.TWO_STAGE:
            raise ConfigError("train saves single-stage models; use target SUBJECT or SUB_ACTIVITY")
        labels = target_labels(matrix, config.target)
        normalizer = fit_normalizer(matrix.values)
        projector = Projector(config.method, config.n_features, config.esp, seed=config.seed)
        train_x = projector.fit_transform(apply_normalizer(normalizer, matrix.values))
        params = _select_params(train_x, labels, config, None)
        return cls(normalizer, projector, kelm_train(train_x, labels, params), config.target)

    def transform(self, values: np.ndarray) -> np.ndarray:
        return self.projector.transform(apply_normalizer(self.normalizer, values))

    def predict(self, matrix: FeatureMatrix) -> np.ndarray:
        labels, _ = kelm_predict(self.model, self.transform(matrix.values))
        return labels

    def score(self, matrix: FeatureMatrix) -> float:
        return float(np.mean(self.predict(matrix) == target_labels(matrix, self.target)))

    def save(self, path: Union[str, Path], force: bool = False) -> Path:
        return save_document(path, "bundle", {
            "target": self.target.value,
            "normalizer": self.normalizer.to_payload(),
            "projector": self.projector.to_payload(),
            "kelm": self.model.to_payload(),
        }, force=force)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TrainedPipeline":
        document = load_document(path, "bundle")
        return cls(
            NormalizerParams.from_payload(document["normalizer"]),
            Projector.from_payload(document["projector"]),
            KELMModel.from_payload(document["kelm"]),
            Target(document["target"]),
        )


# ==================== Benchmark ====================

@dataclass
class BenchmarkRow:
    window_size: int
    n_windows: int
    extraction_s: float
    projection_s: float
    pso_s: float
    train_s: float
    predict_s: float
    accuracy: float

    @property
    def classification_s(self) -> float:
        return self.train_s + self.predict_s

    def to_dict(self) -> Dict[str, float]:
        return {
            "window_size": self.window_size,
            "n_windows": self.n_windows,
            "extraction_s": self.extraction_s,
            "projection_s": self.projection_s,
            "pso_s": self.pso_s,
            "train_s": self.train_s,
            "predict_s": self.predict_s,
            "classification_s": self.classification_s,
            "accuracy": self.accuracy,
        }


def benchmark(config: PipelineConfig, window_sizes: Sequence[int] = (25, 50, 100, 200),
              threads: int = 1) -> Tuple[List[BenchmarkRow], List[EvalReport]]:
    """Run the experiment at each window size and collect per-stage times."""
    rows, reports = [], []
    for window_size in window_sizes:
        run_config = config.with_overrides(window_size=int(window_size), name=f"{config.name}-w{window_size}")
        report = run_experiment(run_config, threads=threads)
        reports.append(report)
        rows.append(BenchmarkRow(
            window_size=int(window_size),
            n_windows=report.n_windows,
            extraction_s=report.stage_seconds("extraction"),
            projection_s=report.stage_seconds("projection"),
            pso_s=report.stage_seconds("pso"),
            train_s=report.stage_seconds("train"),
            predict_s=report.stage_seconds("predict"),
            accuracy=report.mean_accuracy,
        ))
    return rows, reports
