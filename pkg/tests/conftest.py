import numpy as np
import pytest

from gaitid.evaluation import extract_recordings
from gaitid.signal_io import Sensor, SignalRecording, SubActivity
from gaitid.synthetic import generate_synthetic_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_recordings():
    # 3 users x 4 pockets x 2 sessions, 500 samples each
    return generate_synthetic_dataset(n_users=3, n_sessions=2, duration_s=10.0, seed=7, sensors=(Sensor.ACC,))


@pytest.fixture(scope="session")
def small_features(small_recordings):
    return extract_recordings(small_recordings, window_size=50, overlap=0.0)


@pytest.fixture
def make_recording():
    def build(samples, subject="s1", sub_activity=SubActivity.BLP, session="0"):
        return SignalRecording(subject_id=subject, sensor=Sensor.ACC, sub_activity=sub_activity,
                               samples=np.asarray(samples, dtype=float), session=session)
    return build


@pytest.fixture
def write_file(tmp_path):
    def write(relative, text):
        path = tmp_path / relative
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return path
    return write
