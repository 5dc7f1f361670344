import logging
import statistics
import time
from typing import Callable, Dict, List, Optional, Tuple, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")


class StageTimer:
    """
    Collects wall-clock timings per pipeline stage.

    Stage names used by the experiment loop:
    - extraction: windowing + feature extraction
    - projection: normalizer + PCA/ESP fit and transform
    - pso: kernel-parameter search
    - train: KELM solve
    - predict: KELM scoring of the test rows
    """

    STAGES = ("extraction", "projection", "pso", "train", "predict")

    def __init__(self):
        self.samples: Dict[str, List[float]] = {}

    def record(self, stage: str, seconds: float):
        """Record one measurement for a stage."""
        if seconds < 0:
            seconds = 0.0
        self.samples.setdefault(stage, []).append(float(seconds))

    def merge(self, other: "StageTimer"):
        """Fold another timer's measurements into this one (split threads -> report)."""
        for stage, values in other.samples.items():
            self.samples.setdefault(stage, []).extend(values)

    def total(self, stage: str) -> float:
        return float(sum(self.samples.get(stage, [])))

    def mean(self, stage: str) -> float:
        values = self.samples.get(stage, [])
        return float(statistics.fmean(values)) if values else 0.0

    def variance(self, stage: str) -> float:
        values = self.samples.get(stage, [])
        return float(statistics.variance(values)) if len(values) > 1 else 0.0

    def __contains__(self, stage: str) -> bool:
        return stage in self.samples

    def get_summary(self) -> Dict[str, Dict[str, float]]:
        summary = {}
        for stage, values in self.samples.items():
            entry = {"total_s": self.total(stage), "mean_s": self.mean(stage), "count": len(values)}
            if len(values) > 1:
                entry["variance_s2"] = self.variance(stage)
            summary[stage] = entry
        return summary


def timed(stage_name: str, computation: Callable[[], T], timer: Optional[StageTimer] = None,
          repetitions: int = 1) -> Tuple[T, float]:
    """
    Run a computation under a wall clock.

    Args:
        stage_name: Name the measurement is recorded under
        computation: Zero-argument callable
        timer: StageTimer to record into (the active report's)
        repetitions: Run this many times; the last result is returned and
            every run is recorded so the report carries the variance

    Returns:
        (result, elapsed seconds of the last run)
    """
    result = None
    elapsed = 0.0
    for _ in range(max(1, repetitions)):
        start = time.perf_counter()
        result = computation()
        elapsed = time.perf_counter() - start
        if timer is not None:
            timer.record(stage_name, elapsed)
    logger.debug("stage %s: %.4fs", stage_name, elapsed)
    return result, elapsed
