#!/usr/bin/env python3
"""
Multi-section quarter-wave matching transformer design by particle swarm.

The three-section problem: match a real load z_load to a z_target line with
quarter-wave sections Z1 > Z2 > Z3 (Z1 next to the load). Three quarter-wave
transforms give Zin = (Z1*Z3/Z2)^2 / z_load, so the fitness is

    | (Z1*Z3/Z2)^2 / z_load - z_target |  +  penalty_weight * sum(max(0, Z[k+1] - Z[k]))

and every exact solution lies on Z1*Z3/Z2 = sqrt(z_load * z_target).
Other section counts use the ABCD cascade from txline at f0 instead.

Usage:
    result = design(DesignProblem(), SwarmConfig(seed=3, max_iterations=1000))
    result.impedances, result.fitness, result.verified_db_at_f0
"""

import logging
import math
from dataclasses import dataclass, replace
from functools import partial
from typing import Optional, Sequence, Tuple

import numpy as np

import pso
import txline
from pso import ConfigurationError, ConvergenceTrace, SwarmConfig
from txline import DomainError, SweepResult, SweepSettings

logger = logging.getLogger(__name__)


# ============================================================================
# CONFIGURATION
# ============================================================================

DEFAULT_Z_LOAD = 100.0
DEFAULT_Z_TARGET = 50.0
DEFAULT_SECTIONS = 3
DEFAULT_BOUNDS = (10.0, 120.0)
DEFAULT_PENALTY = 1000.0

# ohms of violation charged for two equal neighbours
TIE_OHMS = 1e-9


@dataclass(frozen=True)
class DesignProblem:
    """Load, target line, section count, impedance bounds and ordering constraint."""
    z_load: float = DEFAULT_Z_LOAD
    z_target: float = DEFAULT_Z_TARGET
    n_sections: int = DEFAULT_SECTIONS
    bounds: Tuple[float, float] = DEFAULT_BOUNDS
    ordering_required: bool = True
    penalty_weight: float = DEFAULT_PENALTY

    def validate(self) -> None:
        lo, hi = self.bounds
        if not (math.isfinite(lo) and math.isfinite(hi) and 0 < lo < hi):
            raise ConfigurationError(f"bounds need 0 < low < high, got ({lo}, {hi})")
        if self.n_sections < 1:
            raise ConfigurationError(f"n_sections must be >= 1, got {self.n_sections}")
        if not self.z_load > 0:
            raise ConfigurationError(f"z_load must be > 0, got {self.z_load}")
        if not self.z_target > 0:
            raise ConfigurationError(f"z_target must be > 0, got {self.z_target}")
        if not self.penalty_weight >= 0:
            raise ConfigurationError(f"penalty_weight must be >= 0, got {self.penalty_weight}")

    @property
    def manifold_product(self) -> float:
        """Z1*Z3/Z2 on the three-section solution set."""
        return math.sqrt(self.z_load * self.z_target)

    def swarm_bounds(self) -> Tuple[Tuple[float, float], ...]:
        return pso.uniform_bounds(self.bounds[0], self.bounds[1], self.n_sections)


@dataclass
class DesignResult:
    """Winning impedances (load-adjacent first) with their verification."""
    impedances: np.ndarray
    fitness: float
    trace: ConvergenceTrace
    verified_db_at_f0: float
    termination: str
    iterations: int
    ordering_ok: bool
    seed: int
    sweep: Optional[SweepResult] = None
    non_finite_evaluations: int = 0

    @property
    def constraint_violation(self) -> bool:
        return not self.ordering_ok


# ============================================================================
# FITNESS
# ============================================================================

def _check_positive(z: Sequence[float]) -> None:
    for k, value in enumerate(z):
        if not value > 0:
            raise DomainError(f"impedance z{k + 1} must be > 0, got {value}")


def check_ordering(z: Sequence[float]) -> bool:
    """True iff strictly decreasing away from the load (z1 > z2 > ...)."""
    return all(a > b for a, b in zip(z, z[1:]))


def ordering_penalty(z: Sequence[float], problem: DesignProblem) -> float:
    """penalty_weight per ohm of adjacent increase; 0 when ordering is not required.

    An equal pair is charged TIE_OHMS, so the penalty is zero exactly on strictly
    decreasing vectors.
    """
    if not problem.ordering_required:
        return 0.0
    excess = 0.0
    for a, b in zip(z, z[1:]):
        if b > a:
            excess += b - a
        elif b == a:
            excess += TIE_OHMS
    return problem.penalty_weight * excess


def eq4_mismatch(z: Sequence[float], problem: DesignProblem) -> float:
    """Unpenalized three-section term |(z1*z3/z2)^2 / z_load - z_target|."""
    if len(z) != 3:
        raise DomainError(f"closed-form fitness needs 3 impedances, got {len(z)}")
    _check_positive(z)
    z1, z2, z3 = float(z[0]), float(z[1]), float(z[2])
    product = z1 * z3 / z2
    return abs(product * product / problem.z_load - problem.z_target)


def eq4_fitness(z: Sequence[float], problem: DesignProblem) -> float:
    """Closed-form three-section fitness plus ordering penalty."""
    return eq4_mismatch(z, problem) + ordering_penalty(z, problem)


def cascade_mismatch(z: Sequence[float], problem: DesignProblem, f0: float = txline.DEFAULT_F0) -> float:
    """|Zin - z_target| of the quarter-wave cascade at f0, any section count."""
    _check_positive(z)
    sections = txline.quarter_wave_sections(z)
    z_in = txline.input_impedance(txline.network_two_port(sections, f0, f0), problem.z_load)
    return abs(z_in - problem.z_target)


def cascade_fitness(z: Sequence[float], problem: DesignProblem, f0: float = txline.DEFAULT_F0) -> float:
    """Cascade mismatch plus ordering penalty."""
    return cascade_mismatch(z, problem, f0) + ordering_penalty(z, problem)


def objective_for(problem: DesignProblem, f0: float = txline.DEFAULT_F0):
    """Closed form for three sections, ABCD cascade otherwise."""
    if problem.n_sections == 3:
        return partial(eq4_fitness, problem=problem)
    return partial(cascade_fitness, problem=problem, f0=f0)


# ============================================================================
# DESIGN
# ============================================================================

def design(problem: DesignProblem, swarm: SwarmConfig,
           sweep_settings: SweepSettings = SweepSettings()) -> DesignResult:
    """Run the swarm on the problem's fitness, then verify the winner by sweep.

    A winner that breaks the ordering constraint is returned with
    ``ordering_ok=False`` rather than raised.
    """
    problem.validate()
    sweep_settings.validate()
    if swarm.bounds and len(swarm.bounds) != problem.n_sections:
        raise ConfigurationError(
            f"swarm has {len(swarm.bounds)} dimensions for {problem.n_sections} sections")
    if not swarm.bounds:
        swarm = replace(swarm, bounds=problem.swarm_bounds())

    objective = objective_for(problem, sweep_settings.f0)
    outcome = pso.run(swarm, objective)

    impedances = outcome.best_position
    fitness = float(objective(impedances))
    ordering_ok = check_ordering(impedances)
    if problem.ordering_required and not ordering_ok:
        logger.warning('Seed %d: winner %s violates the decreasing-impedance constraint',
                       swarm.seed, impedances.tolist())

    sections = txline.quarter_wave_sections(impedances)
    sweep = txline.sweep(sections, problem.z_load, problem.z_target, sweep_settings.f0,
                         sweep_settings.grid())
    at_f0 = txline.sweep(sections, problem.z_load, problem.z_target, sweep_settings.f0,
                         [sweep_settings.f0]).points[0]

    return DesignResult(
        impedances=impedances,
        fitness=fitness,
        trace=outcome.trace,
        verified_db_at_f0=at_f0.magnitude_db,
        termination=outcome.termination,
        iterations=outcome.iterations,
        ordering_ok=ordering_ok,
        seed=swarm.seed,
        sweep=sweep,
        non_finite_evaluations=outcome.non_finite_evaluations,
    )
