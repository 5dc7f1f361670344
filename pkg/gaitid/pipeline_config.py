"""
PipelineConfig - One experiment's complete configuration

Supports:
- Synthetic or on-disk datasets (CUSTOM_CSV tree, HAR split directories)
- NONE / PCA / ESP projection with a configurable feature count
- Fixed kernel parameters or a PSO search
- Stratified k-fold or leave-one-subject-out protocols
- Presets for the best-settings reproduction and for quick smoke runs
"""
import os
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from gaitid.errors import ConfigError, GaitIdError
from gaitid.features import N_FEATURES
from gaitid.kelm import KernelParams
from gaitid.projection import ESPSettings, Method
from gaitid.pso import PSOConfig
from gaitid.signal_io import Layout, Sensor, SubActivity, default_overlap
from gaitid.storage import load_document, save_document
from gaitid.synthetic import SyntheticSpec

WINDOW_SIZE_RANGE = (25, 200)
FEATURE_COUNT_RANGE = (5, 40)


class Protocol(str, Enum):
    KFOLD = "KFOLD"
    LOSO = "LOSO"


class Target(str, Enum):
    """What the classifier is asked to predict."""
    SUBJECT = "SUBJECT"
    SUB_ACTIVITY = "SUB_ACTIVITY"
    TWO_STAGE = "TWO_STAGE"


class LosoMode(str, Enum):
    """
    SESSION: per-user legitimate-vs-rest, held-out sessions (one result per user)
    SUBJECT: literal leave-one-subject-out of sub-activity recognition
    """
    SESSION = "SESSION"
    SUBJECT = "SUBJECT"


def _coerce_block(value: Any, cls):
    if isinstance(value, cls):
        return value
    if isinstance(value, dict):
        try:
            return cls(**value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid {cls.__name__} settings: {exc}") from exc
    raise ConfigError(f"cannot build {cls.__name__} from {value!r}")


@dataclass
class PipelineConfig:
    """
    Configuration of one experiment.

    Attributes:
        name: Experiment name (used for report file names)
        dataset_path: Dataset root; None means generate the synthetic dataset
        layout: On-disk layout of dataset_path
        synthetic: Generator settings when dataset_path is None
        sensors: Sensor streams to use
        sub_activities: Sub-activities to keep (empty = all)
        window_size: Samples per window
        overlap: Window overlap fraction (None = layout default)
        filter_order: Moving-average order applied before windowing
        method: NONE, PCA or ESP
        n_features: Target dimension when method is not NONE
        esp: ESP optimizer settings
        kernel: Kernel parameters used when use_pso is False
        use_pso: Tune kernel parameters per split with PSO
        pso: Swarm settings
        pso_max_rows: Stratified subsample size for the PSO objective
        protocol: KFOLD or LOSO
        folds: k for KFOLD
        loso_mode: SESSION or SUBJECT
        target: SUBJECT, SUB_ACTIVITY or TWO_STAGE
        ci_level: Confidence level of the reported interval
        seed: Single source of randomness
        output_dir: Where reports are written

    Example:
        >>> config = PipelineConfig(method="ESP", n_features=30, window_size=50)
        >>> config.validate()
        True
    """
    name: str = "experiment"
    dataset_path: Optional[str] = None
    layout: Layout = Layout.CUSTOM_CSV
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    sensors: Tuple[Sensor, ...] = (Sensor.ACC,)
    sub_activities: Tuple[SubActivity, ...] = ()
    window_size: int = 50
    overlap: Optional[float] = None
    filter_order: int = 3
    method: Method = Method.NONE
    n_features: int = 30
    esp: ESPSettings = field(default_factory=ESPSettings)
    kernel: KernelParams = field(default_factory=KernelParams)
    use_pso: bool = False
    pso: PSOConfig = field(default_factory=PSOConfig)
    pso_max_rows: int = 600
    protocol: Protocol = Protocol.KFOLD
    folds: int = 10
    loso_mode: LosoMode = LosoMode.SESSION
    target: Target = Target.SUBJECT
    ci_level: float = 0.99
    seed: int = 7
    output_dir: str = "reports"

    def __post_init__(self):
        """Coerce strings to enums and lists to tuples."""
        try:
            self.layout = Layout(str(self.layout).upper()) if not isinstance(self.layout, Layout) else self.layout
            self.method = Method(str(self.method).upper()) if not isinstance(self.method, Method) else self.method
            self.protocol = Protocol(str(self.protocol).upper()) if not isinstance(self.protocol, Protocol) \
                else self.protocol
            self.loso_mode = LosoMode(str(self.loso_mode).upper()) if not isinstance(self.loso_mode, LosoMode) \
                else self.loso_mode
            self.target = Target(str(self.target).upper()) if not isinstance(self.target, Target) else self.target
            if isinstance(self.sensors, (str, Sensor)):
                self.sensors = (self.sensors,)
            self.sensors = tuple(Sensor(str(getattr(s, "value", s)).upper()) for s in self.sensors)
            if isinstance(self.sub_activities, (str, SubActivity)):
                self.sub_activities = (self.sub_activities,)
            self.sub_activities = tuple(SubActivity(str(getattr(a, "value", a)).upper())
                                        for a in self.sub_activities)
            for name in ("window_size", "filter_order", "n_features", "folds", "pso_max_rows", "seed"):
                setattr(self, name, int(getattr(self, name)))
            self.ci_level = float(self.ci_level)
            if self.overlap is not None:
                self.overlap = float(self.overlap)
            if isinstance(self.use_pso, str):
                self.use_pso = self.use_pso.strip().lower() in ("true", "yes", "on", "1")
            self.use_pso = bool(self.use_pso)
            if self.dataset_path is not None:
                self.dataset_path = str(self.dataset_path)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        self.synthetic = _coerce_block(self.synthetic, SyntheticSpec)
        self.esp = _coerce_block(self.esp, ESPSettings)
        self.kernel = _coerce_block(self.kernel, KernelParams)
        self.pso = _coerce_block(self.pso, PSOConfig)

    @property
    def effective_overlap(self) -> float:
        return default_overlap(self.layout) if self.overlap is None else float(self.overlap)

    @property
    def feature_dim(self) -> int:
        return N_FEATURES if self.method == Method.NONE else self.n_features

    def validate(self) -> bool:
        """
        Check every field before any computation.

        Returns:
            True if valid

        Raises:
            ConfigError: listing every problem found
        """
        problems: List[str] = []
        low, high = WINDOW_SIZE_RANGE
        if not low <= self.window_size <= high:
            problems.append(f"window_size must be in [{low}, {high}], got {self.window_size}")
        if not 0.0 <= self.effective_overlap < 1.0:
            problems.append(f"overlap must be in [0, 1), got {self.overlap}")
        if self.filter_order < 1 or self.filter_order % 2 == 0:
            problems.append(f"filter_order must be a positive odd integer, got {self.filter_order}")
        if self.method != Method.NONE:
            low, high = FEATURE_COUNT_RANGE
            if self.n_features > N_FEATURES:
                problems.append(f"n_features {self.n_features} exceeds the {N_FEATURES} extracted features")
            elif not low <= self.n_features <= high:
                problems.append(f"n_features must be in [{low}, {high}], got {self.n_features}")
        if self.protocol == Protocol.KFOLD and self.folds < 2:
            problems.append(f"folds must be at least 2, got {self.folds}")
        if self.protocol == Protocol.LOSO and self.target == Target.TWO_STAGE:
            problems.append("TWO_STAGE target is only available with the KFOLD protocol")
        if self.protocol == Protocol.LOSO and self.loso_mode == LosoMode.SUBJECT:
            if self.dataset_path is not None and self.layout == Layout.HAR_DIR:
                problems.append("leave-one-subject-out recognizes pockets; HAR_DIR data has a single GENERIC "
                                "sub-activity")
            elif len(set(self.sub_activities)) == 1:
                problems.append(f"leave-one-subject-out recognizes pockets; sub_activities keeps only "
                                f"{self.sub_activities[0].value}")
        if not 0.0 < self.ci_level < 1.0:
            problems.append(f"ci_level must be in (0, 1), got {self.ci_level}")
        if self.pso_max_rows < 10:
            problems.append(f"pso_max_rows must be at least 10, got {self.pso_max_rows}")
        if self.seed < 0:
            problems.append(f"seed must be non-negative, got {self.seed}")
        if self.dataset_path is not None and not os.path.isdir(self.dataset_path):
            problems.append(f"dataset_path {self.dataset_path} is not a directory")
        if not self.sensors:
            problems.append("at least one sensor is required")

        blocks = [("kernel", self.kernel), ("esp", self.esp), ("pso", self.pso)]
        if self.dataset_path is None:
            blocks.append(("synthetic", self.synthetic))
        for block_name, block in blocks:
            try:
                block.validate()
            except GaitIdError as exc:
                problems.append(f"{block_name}: {exc}")
        if self.use_pso and self.pso.swarm_size < 2:
            problems.append(f"pso: swarm_size must be at least 2, got {self.pso.swarm_size}")
        if self.dataset_path is None and self.synthetic.n_samples < self.window_size:
            problems.append(f"window_size {self.window_size} is larger than the synthetic "
                            f"recordings ({self.synthetic.n_samples} samples)")

        if problems:
            raise ConfigError(f"invalid configuration '{self.name}': " + "; ".join(problems))
        return True

    def with_overrides(self, **changes) -> "PipelineConfig":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        data = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Enum):
                value = value.value
            elif f.name in ("sensors", "sub_activities"):
                value = [v.value for v in value]
            elif hasattr(value, "to_dict"):
                value = value.to_dict()
            elif f.name == "esp":
                value = asdict(value)
            data[f.name] = value
        return data

    def save_to_file(self, path: str, force: bool = False) -> Path:
        """
        Save the configuration as a versioned JSON document (atomic, no silent overwrite).

        Example:
            >>> config.save_to_file("reports/experiment.config.json")
        """
        return save_document(path, "config", self.to_dict(), force=force)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        data = dict(data)
        if "pso" in data and isinstance(data["pso"], dict) and "bounds" in data["pso"]:
            data["pso"] = dict(data["pso"], bounds=tuple(tuple(b) for b in data["pso"]["bounds"]))
        return cls(**data)

    @classmethod
    def load_from_file(cls, path: str) -> "PipelineConfig":
        document = load_document(path, "config")
        return cls.from_dict({k: v for k, v in document.items() if k not in ("format", "version")})

    # ==================== Preset Factory Methods ====================

    @classmethod
    def best_settings(cls) -> "PipelineConfig":
        """
        Best settings: 4 synthetic users x 4 pockets x 8 sessions x 60 s,
        window 50, ESP to 30 features, PSO-tuned KELM, stratified 10-fold.
        """
        return cls(
            name="esp30-w50",
            synthetic=SyntheticSpec(n_users=4, n_sessions=8, duration_s=60.0, seed=7),
            window_size=50,
            method=Method.ESP,
            n_features=30,
            use_pso=True,
            protocol=Protocol.KFOLD,
            folds=10,
            seed=7,
        )

    @classmethod
    def quick(cls) -> "PipelineConfig":
        """Small smoke-test run: 3 users, 2 sessions, 20 s, raw features, fixed kernel."""
        return cls(
            name="quick",
            synthetic=SyntheticSpec(n_users=3, n_sessions=2, duration_s=20.0, seed=7,
                                    sensors=(Sensor.ACC,)),
            window_size=50,
            method=Method.NONE,
            use_pso=False,
            protocol=Protocol.KFOLD,
            folds=3,
            seed=7,
        )
