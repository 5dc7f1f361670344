"""
Signal I/O - Recording ingestion, smoothing and windowing

Two on-disk layouts are understood:

- CUSTOM_CSV: <root>/<subject_id>/<sensor>/<sub_activity>[_<session>].csv,
  one sample per row ("t,ax,ay,az", header optional), accelerations in m/s².
- HAR_DIR: the public smartphone HAR dataset split directories
  (train/, test/) holding "Inertial Signals/{total,body}_acc_{x,y,z}_<split>.txt"
  plus subject_<split>.txt and y_<split>.txt. Every row is one pre-segmented
  128-sample window (2.56 s at 50 Hz, 50% overlap), values in g.
"""
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from gaitid.errors import EmptyInputError, InvalidInputError, InvalidParameterError, ParseError
from gaitid.storage import atomic_write

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE_HZ = 50.0
MIN_WINDOW_LENGTH = 8
HAR_WINDOW_LENGTH = 128
HAR_WALKING_LABEL = 1
STANDARD_GRAVITY = 9.80665

CSV_HEADER = ["t", "ax", "ay", "az"]
_FILE_NAME = re.compile(r"^(?P<activity>[A-Za-z]+)(?:_(?P<session>[\w-]+))?$")
_PARSER_LINE = re.compile(r"line (\d+)")


class Sensor(str, Enum):
    """Raw accelerometer (with gravity) or linear acceleration (gravity removed)."""
    ACC = "ACC"
    LACC = "LACC"


class SubActivity(str, Enum):
    """Walking variant defined by phone placement."""
    BLP = "BLP"  # back-left pocket
    BRP = "BRP"  # back-right pocket
    FLP = "FLP"  # front-left pocket
    FRP = "FRP"  # front-right pocket
    GENERIC = "GENERIC"


class Layout(str, Enum):
    CUSTOM_CSV = "CUSTOM_CSV"
    HAR_DIR = "HAR_DIR"


POCKETS: Tuple[SubActivity, ...] = (SubActivity.BLP, SubActivity.BRP, SubActivity.FLP, SubActivity.FRP)


def default_overlap(layout: Union[Layout, str]) -> float:
    """Plain windowing for our own recordings, 50% for the public dataset."""
    return 0.5 if Layout(layout) == Layout.HAR_DIR else 0.0


def _read_only(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SignalRecording:
    """
    One subject/sensor/sub-activity session of tri-axial samples.

    Attributes:
        subject_id: Opaque subject identifier
        sensor: ACC or LACC
        sub_activity: Pocket placement (or GENERIC)
        samples: (n, 3) array of (ax, ay, az) in m/s², read-only
        sample_rate_hz: Sampling rate, 50 Hz by default
        session: Session identifier within (subject, sensor, sub_activity)
    """
    subject_id: str
    sensor: Sensor
    sub_activity: SubActivity
    samples: np.ndarray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    session: str = "0"

    def __post_init__(self):
        object.__setattr__(self, "subject_id", str(self.subject_id))
        object.__setattr__(self, "sensor", Sensor(self.sensor))
        object.__setattr__(self, "sub_activity", SubActivity(self.sub_activity))
        object.__setattr__(self, "session", str(self.session))
        samples = _read_only(self.samples)
        if samples.ndim != 2 or samples.shape[1] != 3:
            raise InvalidInputError(f"samples must be an (n, 3) array, got shape {samples.shape}")
        if samples.shape[0] == 0:
            raise EmptyInputError(f"recording {self.label} has no samples")
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError(f"recording {self.label} contains non-finite samples")
        if not self.sample_rate_hz > 0:
            raise InvalidParameterError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    @property
    def label(self) -> str:
        return f"{self.subject_id}/{self.sensor.value}/{self.sub_activity.value}#{self.session}"

    def with_samples(self, samples: np.ndarray) -> "SignalRecording":
        return replace(self, samples=samples)


@dataclass(frozen=True, eq=False)
class Window:
    """
    A fixed-length slice of a recording.

    Attributes:
        subject_id, sensor, sub_activity, session: Copied from the source recording
        data: (length, 3) array; column k is axis k
        start: Index of the first sample in the source recording
    """
    subject_id: str
    sensor: Sensor
    sub_activity: SubActivity
    data: np.ndarray
    session: str = "0"
    start: int = 0

    def __post_init__(self):
        data = _read_only(self.data)
        if data.ndim != 2 or data.shape[1] != 3:
            raise InvalidInputError(f"window data must be (length, 3), got shape {data.shape}")
        if data.shape[0] < MIN_WINDOW_LENGTH:
            raise InvalidInputError(
                f"window length {data.shape[0]} is below the minimum of {MIN_WINDOW_LENGTH} samples"
            )
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "sensor", Sensor(self.sensor))
        object.__setattr__(self, "sub_activity", SubActivity(self.sub_activity))

    @property
    def length(self) -> int:
        return int(self.data.shape[0])

    def axis(self, index: int) -> np.ndarray:
        return self.data[:, index]


# ==================== Loading ====================

def load_recording(path: Union[str, Path],
                   layout: Union[Layout, str] = Layout.CUSTOM_CSV,
                   subject_id: Optional[str] = None,
                   sensor: Optional[Union[Sensor, str]] = None,
                   sub_activity: Optional[Union[SubActivity, str]] = None,
                   session: Optional[str] = None,
                   sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> SignalRecording:
    """
    Load one recording.

    Args:
        path: CSV file (CUSTOM_CSV) or split directory (HAR_DIR)
        layout: On-disk layout
        subject_id, sensor, sub_activity, session: Metadata overrides; for
            CUSTOM_CSV they default to what the path encodes. HAR_DIR needs
            subject_id; session selects one walking bout (all bouts otherwise)
        sample_rate_hz: Sampling rate of the file

    Returns:
        SignalRecording with row order preserved

    Raises:
        ParseError: Malformed row (names the line)
        EmptyInputError: File without samples
    """
    layout = Layout(layout)
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} does not exist")

    if layout == Layout.HAR_DIR:
        if subject_id is None:
            raise InvalidParameterError("HAR_DIR recordings need a subject_id")
        bouts = [rec for rec in _har_recordings(path, Sensor(sensor or Sensor.LACC))
                 if rec.subject_id == str(subject_id)]
        if session is not None:
            bouts = [rec for rec in bouts if rec.session == str(session)]
        if not bouts:
            raise EmptyInputError(f"no walking windows for subject {subject_id} in {path}")
        samples = np.concatenate([rec.samples for rec in bouts], axis=0)
        return replace(bouts[0], samples=samples, session=bouts[0].session if len(bouts) == 1 else "all")

    meta_subject, meta_sensor, meta_activity, meta_session = _metadata_from_path(path)
    timestamps, samples = _read_custom_csv(path)
    if timestamps.size > 1 and np.any(np.diff(timestamps) < 0):
        logger.warning("%s: timestamps are not monotonic; keeping file row order", path)

    return SignalRecording(
        subject_id=subject_id if subject_id is not None else meta_subject,
        sensor=Sensor(sensor) if sensor is not None else meta_sensor,
        sub_activity=SubActivity(sub_activity) if sub_activity is not None else meta_activity,
        samples=samples,
        sample_rate_hz=sample_rate_hz,
        session=session if session is not None else meta_session,
    )


def _metadata_from_path(path: Path) -> Tuple[str, Sensor, SubActivity, str]:
    """Read (subject, sensor, sub_activity, session) off <root>/<subject>/<sensor>/<ACT>[_<session>].csv."""
    sensor = Sensor.ACC
    activity = SubActivity.GENERIC
    session = "0"
    subject = path.parent.parent.name or "unknown"

    try:
        sensor = Sensor(path.parent.name.upper())
    except ValueError:
        logger.debug("%s: parent directory is not a sensor name, assuming ACC", path)
        subject = path.parent.name or "unknown"

    match = _FILE_NAME.match(path.stem)
    if match:
        try:
            activity = SubActivity(match.group("activity").upper())
            session = match.group("session") or "0"
        except ValueError:
            logger.debug("%s: file name is not a sub-activity, assuming GENERIC", path)
    return subject, sensor, activity, session


def _read_custom_csv(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    """Parse a CUSTOM_CSV file into (timestamps, samples)."""
    try:
        frame = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=False,
                            skipinitialspace=True, encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise EmptyInputError(f"{path} is empty") from exc
    except pd.errors.ParserError as exc:
        match = _PARSER_LINE.search(str(exc))
        line = int(match.group(1)) if match else None
        raise ParseError("wrong number of columns", path=str(path), line=line) from exc

    # blank lines stay in the index so it keeps counting physical lines
    frame = frame.dropna(how="all")
    if frame.empty:
        raise EmptyInputError(f"{path} is empty")

    if frame.shape[1] != len(CSV_HEADER):
        raise ParseError(f"expected {len(CSV_HEADER)} columns, found {frame.shape[1]}", path=str(path), line=1)

    first = [str(v).strip().lower() for v in frame.iloc[0].tolist()]
    if first == CSV_HEADER:
        frame = frame.iloc[1:]
    if frame.empty:
        raise EmptyInputError(f"{path} has a header but no samples")

    numeric = frame.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    values = numeric.to_numpy(dtype=np.float64)
    bad_rows = ~np.all(np.isfinite(values), axis=1)
    if bad_rows.any():
        # frame index is the 0-based physical row
        line = int(frame.index[np.argmax(bad_rows)]) + 1
        raise ParseError("non-numeric, missing or non-finite value", path=str(path), line=line)

    return values[:, 0], values[:, 1:]


def load_dataset(root: Union[str, Path],
                 layout: Union[Layout, str] = Layout.CUSTOM_CSV,
                 sensors: Optional[Iterable[Union[Sensor, str]]] = None,
                 sub_activities: Optional[Iterable[Union[SubActivity, str]]] = None,
                 threads: int = 1) -> List[SignalRecording]:
    """
    Load every recording under ``root``.

    Args:
        root: Dataset root (CUSTOM_CSV tree, or HAR root holding train/ and test/)
        layout: On-disk layout
        sensors: Keep only these sensors (all if None)
        sub_activities: Keep only these sub-activities (all if None)
        threads: Parallel file loads

    Returns:
        Recordings sorted by (subject, sensor, sub_activity, session)
    """
    layout = Layout(layout)
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a directory")
    wanted_sensors = {Sensor(s) for s in sensors} if sensors else set(Sensor)
    wanted_activities = {SubActivity(a) for a in sub_activities} if sub_activities else set(SubActivity)

    if layout == Layout.HAR_DIR:
        recordings = []
        split_dirs = [d for d in sorted(root.iterdir()) if (d / "Inertial Signals").is_dir()]
        if (root / "Inertial Signals").is_dir():
            split_dirs = [root]
        for split_dir in split_dirs:
            for sensor in sorted(wanted_sensors, key=lambda s: s.value):
                recordings.extend(_har_recordings(split_dir, sensor))
        recordings = [r for r in recordings if r.sub_activity in wanted_activities]
    else:
        paths = []
        for path in sorted(root.glob("*/*/*.csv")):
            subject, sensor, activity, _ = _metadata_from_path(path)
            if sensor in wanted_sensors and activity in wanted_activities:
                paths.append(path)
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            recordings = list(pool.map(load_recording, paths))

    if not recordings:
        raise EmptyInputError(f"no recordings found under {root} for layout {layout.value}")
    recordings.sort(key=lambda r: (r.subject_id, r.sensor.value, r.sub_activity.value, r.session))
    logger.info("Loaded %d recordings from %s", len(recordings), root)
    return recordings


def _read_whitespace_table(path: Path) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"{path} is missing")
    try:
        frame = pd.read_csv(path, sep=r"\s+", header=None, dtype=np.float64)
    except pd.errors.EmptyDataError as exc:
        raise EmptyInputError(f"{path} is empty") from exc
    except (pd.errors.ParserError, ValueError) as exc:
        raise ParseError(f"cannot parse fixed-width table: {exc}", path=str(path)) from exc
    return frame.to_numpy()


def _har_arrays(split_dir: Path, sensor: Sensor) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (signals (rows, 128, 3) in m/s², subjects (rows,), activities (rows,))."""
    split = split_dir.name
    prefix = "total_acc" if sensor == Sensor.ACC else "body_acc"
    axes = [
        _read_whitespace_table(split_dir / "Inertial Signals" / f"{prefix}_{axis}_{split}.txt")
        for axis in ("x", "y", "z")
    ]
    signals = np.stack(axes, axis=-1) * STANDARD_GRAVITY
    subjects = _read_whitespace_table(split_dir / f"subject_{split}.txt")[:, 0].astype(int)
    activities = _read_whitespace_table(split_dir / f"y_{split}.txt")[:, 0].astype(int)
    if not (signals.shape[0] == subjects.shape[0] == activities.shape[0]):
        raise ParseError(
            f"row counts disagree: signals {signals.shape[0]}, subjects {subjects.shape[0]}, "
            f"labels {activities.shape[0]}",
            path=str(split_dir),
        )
    if signals.shape[1] != HAR_WINDOW_LENGTH:
        logger.warning("%s: windows have %d samples, expected %d", split_dir, signals.shape[1], HAR_WINDOW_LENGTH)
    return signals, subjects, activities


def load_har_windows(split_dir: Union[str, Path],
                     sensor: Union[Sensor, str] = Sensor.LACC,
                     activities: Sequence[int] = (HAR_WALKING_LABEL,)) -> List[Window]:
    """
    Read the pre-segmented windows of one HAR split.

    Args:
        split_dir: e.g. "<root>/train"
        sensor: ACC maps to total_acc_*, LACC to body_acc_*
        activities: Activity labels to keep (1 = walking)

    Returns:
        One 128-sample Window per kept row, session = split name
    """
    split_dir = Path(split_dir)
    signals, subjects, labels = _har_arrays(split_dir, Sensor(sensor))
    keep = np.isin(labels, list(activities))
    return [
        Window(subject_id=str(subjects[i]), sensor=Sensor(sensor), sub_activity=SubActivity.GENERIC,
               data=signals[i], session=split_dir.name, start=int(i))
        for i in np.flatnonzero(keep)
    ]


def _har_recordings(split_dir: Path, sensor: Sensor) -> List[SignalRecording]:
    """
    Rebuild continuous walking bouts per subject from 50%-overlapping windows.

    Consecutive walking rows of one subject form a bout; each window
    contributes its first half, the last window of a bout contributes all of it.
    """
    signals, subjects, labels = _har_arrays(split_dir, sensor)
    half = signals.shape[1] // 2
    recordings = []
    bout_counter = {}
    walking = labels == HAR_WALKING_LABEL

    row = 0
    n_rows = signals.shape[0]
    while row < n_rows:
        if not walking[row]:
            row += 1
            continue
        subject = subjects[row]
        end = row
        while end + 1 < n_rows and walking[end + 1] and subjects[end + 1] == subject:
            end += 1
        pieces = [signals[i, :half] for i in range(row, end)] + [signals[end]]
        bout = bout_counter.get(subject, 0)
        bout_counter[subject] = bout + 1
        recordings.append(SignalRecording(
            subject_id=str(subject), sensor=sensor, sub_activity=SubActivity.GENERIC,
            samples=np.concatenate(pieces, axis=0), session=f"{split_dir.name}-{bout}",
        ))
        row = end + 1
    return recordings


# ==================== Writing ====================

def save_recording(recording: SignalRecording, path: Union[str, Path], force: bool = False) -> Path:
    """
    Write a recording in CUSTOM_CSV format (with header, t in seconds).

    Values are written with 17 significant digits, so load_recording reads
    back the same floats.
    """
    t = np.arange(recording.n_samples) / recording.sample_rate_hz
    frame = pd.DataFrame(np.column_stack([t, recording.samples]), columns=CSV_HEADER)
    with atomic_write(path, force=force) as fh:
        frame.to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")
    return Path(path)


def recording_path(root: Union[str, Path], recording: SignalRecording) -> Path:
    """Canonical CUSTOM_CSV location of a recording under ``root``."""
    return (Path(root) / recording.subject_id / recording.sensor.value
            / f"{recording.sub_activity.value}_{recording.session}.csv")


# ==================== Filtering & Windowing ====================

def moving_average_filter(recording: SignalRecording, order: int = 3) -> SignalRecording:
    """
    Centered moving average on every axis.

    Boundary samples average over the truncated neighbourhood, so the
    output has the same length as the input.

    Args:
        recording: Source recording
        order: Odd window length, at most the number of samples

    Raises:
        InvalidParameterError: Even order or order larger than the recording

    Example:
        axis [1, 2, 3, 4] with order 3 -> [1.5, 2, 3, 3.5]
    """
    if order < 1 or order % 2 == 0:
        raise InvalidParameterError(f"filter order must be a positive odd integer, got {order}")
    if order > recording.n_samples:
        raise InvalidParameterError(
            f"filter order {order} exceeds recording length {recording.n_samples}"
        )
    smoothed = (pd.DataFrame(recording.samples)
                .rolling(window=order, center=True, min_periods=1)
                .mean()
                .to_numpy())
    return recording.with_samples(smoothed)


def window_stride(window_size: int, overlap_fraction: float) -> int:
    return max(1, int(round(window_size * (1.0 - overlap_fraction))))


def segment_windows(recording: SignalRecording, window_size: int,
                    overlap_fraction: float = 0.0) -> List[Window]:
    """
    Cut a recording into fixed-size windows.

    Windows start every round(window_size * (1 - overlap_fraction)) samples;
    a trailing partial window is dropped.

    Raises:
        InvalidParameterError: window_size below the minimum or overlap outside [0, 1)
        EmptyInputError: window_size longer than the recording
    """
    if window_size < MIN_WINDOW_LENGTH:
        raise InvalidParameterError(f"window_size must be at least {MIN_WINDOW_LENGTH}, got {window_size}")
    if not 0.0 <= overlap_fraction < 1.0:
        raise InvalidParameterError(f"overlap_fraction must be in [0, 1), got {overlap_fraction}")
    if window_size > recording.n_samples:
        raise EmptyInputError(
            f"window_size {window_size} exceeds recording {recording.label} of {recording.n_samples} samples"
        )

    stride = window_stride(window_size, overlap_fraction)
    starts = range(0, recording.n_samples - window_size + 1, stride)
    return [
        Window(subject_id=recording.subject_id, sensor=recording.sensor,
               sub_activity=recording.sub_activity,
               data=recording.samples[start:start + window_size],
               session=recording.session, start=start)
        for start in starts
    ]


def expected_window_count(n_samples: int, window_size: int, overlap_fraction: float = 0.0) -> int:
    """floor((n - window_size) / stride) + 1, or 0 if the recording is too short."""
    if n_samples < window_size:
        return 0
    return (n_samples - window_size) // window_stride(window_size, overlap_fraction) + 1
