"""
PSO - Particle swarm search over KELM kernel parameters

The swarm moves in log10 space over (a, b, C). Every particle draws its
random coefficients from a generator seeded by (master seed, iteration,
particle index), so results do not depend on the order fitness evaluations
finish in.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.model_selection import StratifiedKFold, train_test_split

from gaitid.errors import GaitIdError, InvalidParameterError, OptimizationError
from gaitid.kelm import KernelParams, kelm_predict, kelm_train

logger = logging.getLogger(__name__)

FitnessFn = Callable[[KernelParams], float]

DEFAULT_BOUNDS = ((-3.0, 3.0), (-3.0, 3.0), (-3.0, 3.0))


@dataclass
class PSOConfig:
    """
    Swarm settings.

    Attributes:
        swarm_size: Number of particles
        iterations: Number of velocity/position updates after initialization
        inertia: w
        c1: Cognitive coefficient (pull toward the particle's own best)
        c2: Social coefficient (pull toward the swarm's best)
        bounds: (low, high) on log10(a), log10(b), log10(C)
        seed: Master seed
    """
    swarm_size: int = 20
    iterations: int = 30
    inertia: float = 0.7298
    c1: float = 1.49618
    c2: float = 1.49618
    bounds: Tuple[Tuple[float, float], ...] = DEFAULT_BOUNDS
    seed: int = 0

    def __post_init__(self):
        self.bounds = tuple((float(low), float(high)) for low, high in self.bounds)

    def validate(self) -> bool:
        if self.swarm_size < 1:
            raise InvalidParameterError(f"swarm_size must be positive, got {self.swarm_size}")
        if self.iterations < 1:
            raise InvalidParameterError(f"iterations must be positive, got {self.iterations}")
        if len(self.bounds) == 0:
            raise InvalidParameterError("bounds must name at least one dimension")
        for low, high in self.bounds:
            if not low < high:
                raise InvalidParameterError(f"bound low must be < high, got ({low}, {high})")
        if self.seed < 0:
            raise InvalidParameterError(f"seed must be non-negative, got {self.seed}")
        return True

    @property
    def lower(self) -> np.ndarray:
        return np.array([low for low, _ in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([high for _, high in self.bounds])

    def to_dict(self) -> dict:
        data = asdict(self)
        data["bounds"] = [list(b) for b in self.bounds]
        return data


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_fitness: float = -np.inf
    fitness: float = -np.inf


@dataclass
class SwarmState:
    """Snapshot handed to the per-iteration callback."""
    iteration: int
    particles: List[Particle]
    best_position: np.ndarray
    best_fitness: float
    history: List[float] = field(default_factory=list)


def _particle_rng(seed: int, iteration: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, iteration, index])


def _evaluate(fitness: FitnessFn, positions: Sequence[np.ndarray], threads: int) -> List[float]:
    def score(position: np.ndarray) -> float:
        try:
            value = float(fitness(KernelParams.from_log10(position)))
        except GaitIdError as exc:
            logger.warning("PSO: fitness failed at log10 position %s: %s", np.round(position, 4).tolist(), exc)
            return -np.inf
        if not np.isfinite(value):
            logger.warning("PSO: non-finite fitness %r at log10 position %s", value, np.round(position, 4).tolist())
            return -np.inf
        return value

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            return list(executor.map(score, positions))
    return [score(p) for p in positions]


def pso_optimize(fitness: FitnessFn, config: Optional[PSOConfig] = None, threads: int = 1,
                 callback: Optional[Callable[[SwarmState], None]] = None) -> Tuple[KernelParams, float, List[float]]:
    """
    Maximize a fitness over kernel parameters with a global-best particle swarm.

    Update per particle and dimension:
        v <- w*v + c1*r1*(pbest - x) + c2*r2*(gbest - x),  |v| <= (high - low) / 2
        x <- clip(x + v, low, high)

    Args:
        fitness: Maps KernelParams to a score (higher is better)
        config: Swarm settings
        threads: Evaluate the particles of one iteration in parallel
        callback: Called after initialization (iteration 0) and after every iteration

    Returns:
        (best params, best fitness, per-iteration best fitness; non-decreasing)

    Raises:
        OptimizationError: no particle ever produced a finite fitness
    """
    config = config or PSOConfig()
    config.validate()
    lower, upper = config.lower, config.upper
    width = upper - lower
    max_velocity = width / 2.0
    dim = lower.shape[0]

    particles = []
    for index in range(config.swarm_size):
        rng = _particle_rng(config.seed, 0, index)
        position = lower + rng.random(dim) * width
        velocity = 0.1 * width * (2.0 * rng.random(dim) - 1.0)
        particles.append(Particle(position=position, velocity=velocity, best_position=position.copy()))

    for particle, value in zip(particles, _evaluate(fitness, [p.position for p in particles], threads)):
        particle.fitness = particle.best_fitness = value

    def global_best() -> Tuple[np.ndarray, float]:
        best = max(range(len(particles)), key=lambda i: (particles[i].best_fitness, -i))
        return particles[best].best_position.copy(), particles[best].best_fitness

    best_position, best_fitness = global_best()
    history: List[float] = []
    if callback is not None:
        callback(SwarmState(0, particles, best_position, best_fitness, list(history)))

    for iteration in range(1, config.iterations + 1):
        for index, particle in enumerate(particles):
            rng = _particle_rng(config.seed, iteration, index)
            r1 = rng.random(dim)
            r2 = rng.random(dim)
            velocity = (config.inertia * particle.velocity
                        + config.c1 * r1 * (particle.best_position - particle.position)
                        + config.c2 * r2 * (best_position - particle.position))
            particle.velocity = np.clip(velocity, -max_velocity, max_velocity)
            particle.position = np.clip(particle.position + particle.velocity, lower, upper)

        values = _evaluate(fitness, [p.position for p in particles], threads)
        for particle, value in zip(particles, values):
            particle.fitness = value
            if value > particle.best_fitness:
                particle.best_fitness = value
                particle.best_position = particle.position.copy()

        candidate_position, candidate_fitness = global_best()
        if candidate_fitness > best_fitness:
            best_position, best_fitness = candidate_position, candidate_fitness
        history.append(best_fitness)
        if callback is not None:
            callback(SwarmState(iteration, particles, best_position, best_fitness, list(history)))

    if not np.isfinite(best_fitness):
        raise OptimizationError(f"all {config.swarm_size} particles scored -inf for {config.iterations} iterations")

    best_params = KernelParams.from_log10(best_position)
    logger.info("PSO: best fitness %.4f at a=%.4g b=%.4g C=%.4g", best_fitness, best_params.a, best_params.b, best_params.C)
    return best_params, best_fitness, history


def kelm_cv_fitness(X: np.ndarray, labels: Sequence, folds: int = 3, seed: int = 0,
                    max_rows: Optional[int] = 600) -> FitnessFn:
    """
    Build the PSO objective: mean stratified k-fold accuracy of a KELM.

    Uses only the rows passed in (the outer protocol's training split). When
    there are more than max_rows rows, a stratified subsample is drawn once.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if max_rows is not None and X.shape[0] > max_rows:
        keep, _ = train_test_split(np.arange(X.shape[0]), train_size=max_rows, stratify=labels, random_state=seed)
        keep = np.sort(keep)
        X, labels = X[keep], labels[keep]

    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    splits = list(splitter.split(X, labels))

    def fitness(params: KernelParams) -> float:
        scores = []
        for train_index, test_index in splits:
            model = kelm_train(X[train_index], labels[train_index], params)
            predicted, _ = kelm_predict(model, X[test_index])
            scores.append(np.mean(predicted == labels[test_index]))
        return float(np.mean(scores))

    return fitness


def tune_kernel(X: np.ndarray, labels: Sequence, config: Optional[PSOConfig] = None,
                max_rows: Optional[int] = 600, threads: int = 1) -> Tuple[KernelParams, float, List[float]]:
    """Run the swarm against kelm_cv_fitness on (X, labels)."""
    config = config or PSOConfig()
    fitness = kelm_cv_fitness(X, labels, folds=3, seed=config.seed, max_rows=max_rows)
    return pso_optimize(fitness, config, threads=threads)
