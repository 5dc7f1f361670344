"""
Synthetic gait recordings

Stands in for private walking datasets. Each user walks with a personal
cadence and a personal harmonic signature on each body axis; each pocket
re-orients the phone (axis permutation and sign flips); each session adds a
small jitter to cadence, amplitude and starting phase. Sensor noise is AR(1)
with coefficient 0.3 and a user-specific variance. ACC streams carry gravity,
LACC streams do not.
"""
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy.signal import lfilter

from gaitid.errors import InvalidParameterError
from gaitid.signal_io import (DEFAULT_SAMPLE_RATE_HZ, POCKETS, STANDARD_GRAVITY, Sensor, SignalRecording,
                              SubActivity, recording_path, save_recording)

logger = logging.getLogger(__name__)

N_HARMONICS = 4
NOISE_AR = 0.3
STEP_FREQUENCY_RANGE_HZ = (1.6, 2.2)


@dataclass
class SyntheticSpec:
    """
    Parameters of a synthetic dataset.

    Attributes:
        n_users: Number of walkers (>= 2)
        n_sessions: Sessions per user and pocket
        duration_s: Length of every recording
        sample_rate_hz: Sampling rate
        seed: Master seed; equal seeds give bit-identical recordings
        sensors: Sensor streams to produce
    """
    n_users: int = 4
    n_sessions: int = 8
    duration_s: float = 60.0
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    seed: int = 7
    sensors: Tuple[Sensor, ...] = (Sensor.ACC, Sensor.LACC)

    def __post_init__(self):
        self.sensors = tuple(Sensor(s) for s in self.sensors)

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))

    def validate(self) -> bool:
        if self.n_users < 2:
            raise InvalidParameterError(f"n_users must be at least 2, got {self.n_users}")
        if self.n_sessions < 1:
            raise InvalidParameterError(f"n_sessions must be positive, got {self.n_sessions}")
        if self.sample_rate_hz <= 0:
            raise InvalidParameterError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if self.duration_s <= 0 or self.n_samples < 1:
            raise InvalidParameterError(f"duration_s must give at least one sample, got {self.duration_s}")
        if self.seed < 0:
            raise InvalidParameterError(f"seed must be non-negative, got {self.seed}")
        if not self.sensors:
            raise InvalidParameterError("at least one sensor is required")
        return True

    def to_dict(self) -> dict:
        data = asdict(self)
        data["sensors"] = [s.value for s in self.sensors]
        return data


@dataclass(frozen=True)
class UserGait:
    """Gait signature of one synthetic walker (body frame: vertical, forward, lateral)."""
    subject_id: str
    step_frequency_hz: float
    amplitudes: np.ndarray
    phases: np.ndarray
    noise_std: float


@dataclass(frozen=True)
class PocketOrientation:
    permutation: Tuple[int, int, int]
    signs: Tuple[float, float, float]

    def apply(self, body: np.ndarray) -> np.ndarray:
        return body[:, list(self.permutation)] * np.asarray(self.signs)


def subject_name(index: int) -> str:
    return f"u{index + 1:02d}"


def draw_user(seed: int, index: int) -> UserGait:
    rng = np.random.default_rng([seed, 1, index])
    low, high = STEP_FREQUENCY_RANGE_HZ
    harmonic_decay = 1.0 / np.arange(1, N_HARMONICS + 1)
    return UserGait(
        subject_id=subject_name(index),
        step_frequency_hz=float(rng.uniform(low, high)),
        amplitudes=rng.uniform(0.5, 3.0, size=(3, N_HARMONICS)) * harmonic_decay,
        phases=rng.uniform(0.0, 2.0 * np.pi, size=(3, N_HARMONICS)),
        noise_std=float(np.sqrt(rng.uniform(0.02, 0.12))),
    )


# phone axes (x, y, z) read body axes in this order, with these signs
POCKET_ORIENTATIONS: Dict[SubActivity, PocketOrientation] = {
    SubActivity.BLP: PocketOrientation((1, 0, 2), (-1.0, 1.0, 1.0)),
    SubActivity.BRP: PocketOrientation((1, 0, 2), (-1.0, -1.0, -1.0)),
    SubActivity.FLP: PocketOrientation((1, 2, 0), (1.0, 1.0, -1.0)),
    SubActivity.FRP: PocketOrientation((1, 2, 0), (1.0, -1.0, 1.0)),
}


def _session_motion(user: UserGait, spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Body-frame linear acceleration of one session, shape (n, 3)."""
    t = np.arange(spec.n_samples) / spec.sample_rate_hz
    cadence = user.step_frequency_hz * (1.0 + 0.01 * rng.standard_normal())
    amplitudes = user.amplitudes * (1.0 + 0.03 * rng.standard_normal(user.amplitudes.shape))
    start_phase = rng.uniform(0.0, 2.0 * np.pi)

    motion = np.zeros((spec.n_samples, 3))
    for harmonic in range(1, N_HARMONICS + 1):
        angle = 2.0 * np.pi * harmonic * cadence * t + harmonic * start_phase
        motion += amplitudes[:, harmonic - 1] * np.cos(angle[:, None] + user.phases[:, harmonic - 1])

    innovations = user.noise_std * np.sqrt(1.0 - NOISE_AR ** 2) * rng.standard_normal((spec.n_samples, 3))
    motion += lfilter([1.0], [1.0, -NOISE_AR], innovations, axis=0)
    return motion


def generate_synthetic_dataset(n_users: int = 4, n_sessions: int = 8, duration_s: float = 60.0,
                               seed: int = 7, sensors: Sequence[Union[Sensor, str]] = (Sensor.ACC, Sensor.LACC),
                               sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> List[SignalRecording]:
    """
    Generate walking recordings for every user x pocket x session x sensor.

    Returns:
        Recordings sorted by (subject, sensor, sub_activity, session), the
        same order load_dataset returns for the written tree.

    Raises:
        InvalidParameterError: n_users < 2 or other out-of-range parameters

    Example:
        >>> recordings = generate_synthetic_dataset(n_users=4, n_sessions=8, seed=7)
        >>> recordings[0].n_samples
        3000
    """
    spec = SyntheticSpec(n_users=n_users, n_sessions=n_sessions, duration_s=duration_s,
                         sample_rate_hz=sample_rate_hz, seed=seed, sensors=tuple(sensors))
    return generate_from_spec(spec)


def generate_from_spec(spec: SyntheticSpec) -> List[SignalRecording]:
    spec.validate()
    gravity_body = np.array([STANDARD_GRAVITY, 0.0, 0.0])
    recordings = []
    for user_index in range(spec.n_users):
        user = draw_user(spec.seed, user_index)
        for pocket in POCKETS:
            orientation = POCKET_ORIENTATIONS[pocket]
            gravity = orientation.apply(gravity_body[None, :])[0]
            for session in range(spec.n_sessions):
                rng = np.random.default_rng([spec.seed, 3, user_index, POCKETS.index(pocket), session])
                linear = orientation.apply(_session_motion(user, spec, rng))
                streams: Dict[Sensor, np.ndarray] = {Sensor.LACC: linear, Sensor.ACC: linear + gravity}
                for sensor in spec.sensors:
                    recordings.append(SignalRecording(
                        subject_id=user.subject_id,
                        sensor=sensor,
                        sub_activity=pocket,
                        samples=streams[sensor],
                        sample_rate_hz=spec.sample_rate_hz,
                        session=f"s{session + 1:02d}",
                    ))
    recordings.sort(key=lambda r: (r.subject_id, r.sensor.value, r.sub_activity.value, r.session))
    logger.info("Generated %d synthetic recordings (%d users, %d sessions, %.1fs)",
                len(recordings), spec.n_users, spec.n_sessions, spec.duration_s)
    return recordings


def write_synthetic_dataset(root: Union[str, Path], spec: SyntheticSpec, force: bool = False) -> List[Path]:
    """Generate a dataset and write it as a CUSTOM_CSV tree under root."""
    paths = []
    for recording in generate_from_spec(spec):
        paths.append(save_recording(recording, recording_path(root, recording), force=force))
    return paths
