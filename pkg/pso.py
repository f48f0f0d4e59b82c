#!/usr/bin/env python3
"""
Particle Swarm Optimizer - seedable, bounded, global-best PSO over real vectors.

Usage:
    config = SwarmConfig(bounds=((10, 120),) * 3, population=100, seed=7)
    result = run(config, objective)

    result.best_position       # np.ndarray
    result.best_fitness        # float
    result.trace.to_csv(path)  # iteration,global_best_fitness
    result.termination         # "tolerance" | "budget"

Update rule (per particle, per component):
    v <- w*v + c1*r1*(p_best - x) + c2*r2*(g_best - x), clamped to [-v_clamp, +v_clamp]
    x <- x + v, clamped to bounds (a clamped component gets velocity 0)

r1, r2 are U(0,1) draws when stochastic_update is set, identically 1 otherwise.
All random numbers come from one numpy PCG64 generator, drawn on the calling thread in
a fixed order (particles in index order; per particle r1 components then r2 components),
so a run is bit-reproducible from its seed whatever the evaluation parallelism.
"""

import csv
import logging
import math
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], float]


# ============================================================================
# CONFIGURATION
# ============================================================================

DEFAULT_POPULATION = 100
DEFAULT_INERTIA = 0.7
DEFAULT_COGNITIVE = 1.8
DEFAULT_SOCIAL = 1.8
DEFAULT_MAX_ITERATIONS = 10000
DEFAULT_FITNESS_TOLERANCE = 1e-6
DEFAULT_SEED = 0

# v_clamp default, as a fraction of (high - low) per dimension
DEFAULT_VCLAMP_FRACTION = 0.2

TERMINATION_TOLERANCE = "tolerance"
TERMINATION_BUDGET = "budget"

TRACE_HEADER = ("iteration", "global_best_fitness")


class ConfigurationError(ValueError):
    """Invalid optimizer or problem configuration."""


@dataclass(frozen=True)
class SwarmConfig:
    """All PSO hyperparameters, bounds, seed and termination settings.

    ``bounds`` is one ``(low, high)`` pair per dimension. ``v_clamp`` is either
    one value per dimension or None for ``DEFAULT_VCLAMP_FRACTION * (high - low)``.
    """
    bounds: Tuple[Tuple[float, float], ...] = ()
    population: int = DEFAULT_POPULATION
    inertia_w: float = DEFAULT_INERTIA
    cognitive_c1: float = DEFAULT_COGNITIVE
    social_c2: float = DEFAULT_SOCIAL
    v_clamp: Optional[Tuple[float, ...]] = None
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    fitness_tolerance: float = DEFAULT_FITNESS_TOLERANCE
    seed: int = DEFAULT_SEED
    stochastic_update: bool = True
    workers: int = 1

    @property
    def dimension(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds], dtype=float)

    @property
    def clamp(self) -> np.ndarray:
        if self.v_clamp is None:
            return DEFAULT_VCLAMP_FRACTION * (self.upper - self.lower)
        return np.array(self.v_clamp, dtype=float)

    def validate(self) -> None:
        """Raise ConfigurationError if the configuration cannot drive a run."""
        if self.population < 1:
            raise ConfigurationError(f"population must be >= 1, got {self.population}")
        if self.dimension < 1:
            raise ConfigurationError("bounds must describe at least one dimension")
        for k, (lo, hi) in enumerate(self.bounds):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ConfigurationError(f"bounds[{k}] must be finite, got ({lo}, {hi})")
            if not lo < hi:
                raise ConfigurationError(f"bounds[{k}] needs low < high, got ({lo}, {hi})")
        if self.v_clamp is not None and len(self.v_clamp) != self.dimension:
            raise ConfigurationError(
                f"v_clamp has {len(self.v_clamp)} values for {self.dimension} dimensions")
        clamp = self.clamp
        if not (np.all(np.isfinite(clamp)) and np.all(clamp > 0)):
            raise ConfigurationError(f"v_clamp must be finite and > 0, got {clamp.tolist()}")
        if self.max_iterations < 0:
            raise ConfigurationError(f"max_iterations must be >= 0, got {self.max_iterations}")
        if math.isnan(self.fitness_tolerance) or self.fitness_tolerance < 0:
            raise ConfigurationError(
                f"fitness_tolerance must be >= 0, got {self.fitness_tolerance}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError(f"seed must fit in 64 bits, got {self.seed}")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")


# ============================================================================
# SWARM STATE
# ============================================================================

@dataclass(frozen=True, eq=False)
class Particle:
    """Snapshot of one particle: where it is, where it goes, the best it has seen."""
    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_fitness: float
    non_finite: bool = False


def update_personal_best(particle: Particle, fitness: float) -> Particle:
    """Adopt the current position as personal best on strict improvement.

    Ties keep the incumbent. A non-finite fitness is treated as +inf and only
    sets the ``non_finite`` flag.
    """
    if not math.isfinite(fitness):
        return replace(particle, non_finite=True)
    if fitness < particle.best_fitness:
        return replace(particle, best_position=particle.position.copy(), best_fitness=float(fitness))
    return particle


@dataclass(eq=False)
class SwarmState:
    """Swarm arrays, one row per particle, plus the global best.

    Owned by the run loop; ``particles`` hands out copies.
    """
    positions: np.ndarray
    velocities: np.ndarray
    best_positions: np.ndarray
    best_fitness: np.ndarray
    non_finite: np.ndarray
    global_best_position: np.ndarray
    global_best_fitness: float
    rng: np.random.Generator = field(repr=False)
    iteration: int = 0

    @property
    def particles(self) -> List[Particle]:
        return [
            Particle(
                position=self.positions[i].copy(),
                velocity=self.velocities[i].copy(),
                best_position=self.best_positions[i].copy(),
                best_fitness=float(self.best_fitness[i]),
                non_finite=bool(self.non_finite[i] > 0),
            )
            for i in range(len(self.positions))
        ]

    @property
    def non_finite_evaluations(self) -> int:
        return int(self.non_finite.sum())


@dataclass
class ConvergenceTrace:
    """Global best fitness per iteration."""
    iterations: List[int] = field(default_factory=list)
    fitness: List[float] = field(default_factory=list)

    def record(self, iteration: int, value: float) -> None:
        if self.iterations and iteration <= self.iterations[-1]:
            raise ValueError(f"trace iterations must increase, got {iteration} after {self.iterations[-1]}")
        self.iterations.append(int(iteration))
        self.fitness.append(float(value))

    def __len__(self) -> int:
        return len(self.iterations)

    def rows(self) -> List[Tuple[int, float]]:
        return list(zip(self.iterations, self.fitness))

    def value_at(self, iteration: int) -> float:
        """Global best as of ``iteration``; a run that stopped earlier keeps its last value."""
        if not self.iterations or iteration < self.iterations[0]:
            raise ValueError(f"no trace entry at or before iteration {iteration}")
        pos = int(np.searchsorted(self.iterations, iteration, side="right")) - 1
        return self.fitness[pos]

    def convergence_ratio(self, early: int = 100, late: int = 1000, floor: float = 0.0) -> float:
        """value_at(early) / value_at(late), both raised to at least ``floor``.

        Values below the floor count as fully converged. inf when the late value is 0 and the early one is not.
        """
        if floor < 0:
            raise ValueError(f"floor must be >= 0, got {floor}")
        a, b = max(self.value_at(early), floor), max(self.value_at(late), floor)
        if b == 0:
            return 1.0 if a == 0 else math.inf
        return a / b

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(TRACE_HEADER)
            for it, value in self.rows():
                writer.writerow((it, repr(value)))


@dataclass
class RunResult:
    """Outcome of a full optimizer run."""
    best_position: np.ndarray
    best_fitness: float
    trace: ConvergenceTrace
    termination: str
    iterations: int
    non_finite_evaluations: int = 0


# ============================================================================
# ENGINE
# ============================================================================

def _evaluate(objective: Objective, positions: np.ndarray, workers: int,
              pool: Optional[Executor] = None) -> np.ndarray:
    """Objective value of every row, in row order."""
    if pool is not None:
        values = list(pool.map(objective, list(positions)))
    elif workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as own:
            values = list(own.map(objective, list(positions)))
    else:
        values = [objective(x) for x in positions]
    return np.array(values, dtype=float)


def _absorb(state: SwarmState, values: np.ndarray) -> None:
    """Apply personal-best then global-best selection to freshly evaluated positions."""
    finite = np.isfinite(values)
    if not finite.all():
        logger.warning('Iteration %d: %d non-finite objective values ignored',
                       state.iteration, int((~finite).sum()))
        state.non_finite += ~finite
    values = np.where(finite, values, np.inf)

    improved = values < state.best_fitness
    state.best_positions[improved] = state.positions[improved]
    state.best_fitness[improved] = values[improved]

    # argmin picks the lowest index among equals; the incumbent survives ties
    best = int(np.argmin(state.best_fitness))
    if state.best_fitness[best] < state.global_best_fitness:
        state.global_best_fitness = float(state.best_fitness[best])
        state.global_best_position = state.best_positions[best].copy()


def initialize_swarm(config: SwarmConfig, objective: Objective,
                     pool: Optional[Executor] = None) -> SwarmState:
    """Scatter the swarm uniformly over the bounds and select the first global best.

    ``pool`` is reused for evaluation when given; otherwise ``workers > 1`` opens a
    pool for this call only.
    """
    config.validate()
    n, dim = config.population, config.dimension
    lower, upper, clamp = config.lower, config.upper, config.clamp

    rng = np.random.Generator(np.random.PCG64(config.seed))
    # per particle: position components, then velocity components
    u = rng.random((n, 2, dim))
    positions = lower + u[:, 0, :] * (upper - lower)
    velocities = -clamp + u[:, 1, :] * (2.0 * clamp)

    state = SwarmState(
        positions=positions,
        velocities=velocities,
        best_positions=positions.copy(),
        best_fitness=np.full(n, np.inf),
        non_finite=np.zeros(n, dtype=int),
        global_best_position=positions[0].copy(),
        global_best_fitness=math.inf,
        iteration=0,
        rng=rng,
    )
    _absorb(state, _evaluate(objective, positions, config.workers, pool))
    return state


def step(state: SwarmState, config: SwarmConfig, objective: Objective,
         pool: Optional[Executor] = None) -> SwarmState:
    """One synchronous PSO iteration; returns a new state sharing only the generator."""
    n, dim = state.positions.shape
    lower, upper, clamp = config.lower, config.upper, config.clamp

    if config.stochastic_update:
        # per particle: r1 components, then r2 components
        r = state.rng.random((n, 2, dim))
        r1, r2 = r[:, 0, :], r[:, 1, :]
    else:
        r1 = r2 = np.ones((n, dim))

    x = state.positions
    w, c1, c2 = config.inertia_w, config.cognitive_c1, config.social_c2
    v = w * state.velocities + c1 * r1 * (state.best_positions - x) + c2 * r2 * (state.global_best_position - x)
    v = np.clip(v, -clamp, clamp)

    x = x + v
    outside = (x < lower) | (x > upper)
    x = np.clip(x, lower, upper)
    v[outside] = 0.0

    nxt = SwarmState(
        positions=x,
        velocities=v,
        best_positions=state.best_positions.copy(),
        best_fitness=state.best_fitness.copy(),
        non_finite=state.non_finite.copy(),
        global_best_position=state.global_best_position.copy(),
        global_best_fitness=state.global_best_fitness,
        iteration=state.iteration + 1,
        rng=state.rng,
    )
    _absorb(nxt, _evaluate(objective, x, config.workers, pool))
    return nxt


def run(config: SwarmConfig, objective: Objective) -> RunResult:
    """Iterate until the global best reaches the tolerance or the iteration budget runs out."""
    config.validate()
    logger.info('PSO start: population=%d dimension=%d seed=%d stochastic=%s',
                config.population, config.dimension, config.seed, config.stochastic_update)

    # one pool for the whole run
    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        state = initialize_swarm(config, objective, pool)
        trace = ConvergenceTrace()
        trace.record(state.iteration, state.global_best_fitness)

        while (state.global_best_fitness > config.fitness_tolerance
               and state.iteration < config.max_iterations):
            state = step(state, config, objective, pool)
            trace.record(state.iteration, state.global_best_fitness)
            logger.debug('iter %d: global best %.6g', state.iteration, state.global_best_fitness)
    finally:
        if pool is not None:
            pool.shutdown()

    termination = (TERMINATION_TOLERANCE if state.global_best_fitness <= config.fitness_tolerance
                   else TERMINATION_BUDGET)
    logger.info('PSO stop after %d iterations (%s): best fitness %.6g',
                state.iteration, termination, state.global_best_fitness)

    return RunResult(
        best_position=state.global_best_position.copy(),
        best_fitness=state.global_best_fitness,
        trace=trace,
        termination=termination,
        iterations=state.iteration,
        non_finite_evaluations=state.non_finite_evaluations,
    )


def uniform_bounds(low: float, high: float, dimension: int) -> Tuple[Tuple[float, float], ...]:
    """Same (low, high) pair repeated for every dimension."""
    return tuple((float(low), float(high)) for _ in range(dimension))
