"""Tests for the particle swarm engine."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
import pytest

import pso
from pso import (
    ConfigurationError,
    ConvergenceTrace,
    Particle,
    SwarmConfig,
    SwarmState,
    initialize_swarm,
    run,
    step,
    update_personal_best,
)


def sphere(x):
    return float(np.sum(x * x))


def cube(low, high, dim=3, **kwargs):
    return SwarmConfig(bounds=pso.uniform_bounds(low, high, dim), **kwargs)


def single_particle_state(x, v, p_best, g_best, p_fitness=1.0, g_fitness=0.5):
    return SwarmState(
        positions=np.array([[x]], dtype=float),
        velocities=np.array([[v]], dtype=float),
        best_positions=np.array([[p_best]], dtype=float),
        best_fitness=np.array([p_fitness]),
        non_finite=np.zeros(1, dtype=int),
        global_best_position=np.array([g_best], dtype=float),
        global_best_fitness=g_fitness,
        rng=np.random.default_rng(0),
    )


class TestSwarmConfig:
    """Tests for configuration validation."""

    def test_zero_population_rejected(self):
        with pytest.raises(ConfigurationError):
            cube(10, 120, population=0).validate()

    def test_non_finite_bounds_rejected(self):
        with pytest.raises(ConfigurationError):
            SwarmConfig(bounds=((0.0, math.inf),)).validate()

    def test_inverted_bounds_rejected(self):
        with pytest.raises(ConfigurationError):
            SwarmConfig(bounds=((5.0, 5.0),)).validate()

    def test_nonpositive_vclamp_rejected(self):
        with pytest.raises(ConfigurationError):
            cube(0, 1, dim=2, v_clamp=(1.0, 0.0)).validate()

    def test_default_vclamp_is_fifth_of_range(self):
        config = cube(10, 120)
        assert config.clamp.tolist() == pytest.approx([22.0, 22.0, 22.0])

    def test_initialize_rejects_empty_swarm(self):
        with pytest.raises(ConfigurationError):
            initialize_swarm(cube(10, 120, population=0), sphere)


class TestInitializeSwarm:
    """Tests for swarm initialization."""

    def test_positions_inside_bounds(self):
        state = initialize_swarm(cube(10, 120, population=100, seed=1), sphere)
        assert state.positions.shape == (100, 3)
        assert np.all(state.positions >= 10) and np.all(state.positions <= 120)

    def test_velocities_inside_clamp(self):
        config = cube(10, 120, population=100, seed=2)
        state = initialize_swarm(config, sphere)
        assert np.all(np.abs(state.velocities) <= config.clamp)

    def test_personal_best_is_start(self):
        state = initialize_swarm(cube(-5, 5, population=20, seed=3), sphere)
        for p in state.particles:
            assert np.array_equal(p.best_position, p.position)
            assert p.best_fitness == sphere(p.position)

    def test_global_best_is_min_of_personal(self):
        state = initialize_swarm(cube(-5, 5, population=20, seed=4), sphere)
        assert state.global_best_fitness == state.best_fitness.min()
        k = int(np.argmin(state.best_fitness))
        assert np.array_equal(state.global_best_position, state.best_positions[k])

    def test_same_seed_same_state(self):
        a = initialize_swarm(cube(10, 120, seed=42), sphere)
        b = initialize_swarm(cube(10, 120, seed=42), sphere)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.velocities, b.velocities)
        assert np.array_equal(a.best_fitness, b.best_fitness)

    def test_different_seed_different_state(self):
        a = initialize_swarm(cube(10, 120, seed=1), sphere)
        b = initialize_swarm(cube(10, 120, seed=2), sphere)
        assert not np.array_equal(a.positions, b.positions)


class TestUpdatePersonalBest:
    """Tests for the personal-best rule."""

    def particle(self, best_fitness):
        return Particle(
            position=np.array([1.0, 2.0]),
            velocity=np.zeros(2),
            best_position=np.array([3.0, 4.0]),
            best_fitness=best_fitness,
        )

    def test_strict_improvement_adopted(self):
        p = update_personal_best(self.particle(0.5), 0.2)
        assert p.best_fitness == 0.2
        assert p.best_position.tolist() == [1.0, 2.0]

    def test_tie_keeps_incumbent(self):
        p = update_personal_best(self.particle(0.2), 0.2)
        assert p.best_fitness == 0.2
        assert p.best_position.tolist() == [3.0, 4.0]

    def test_nan_never_adopted_and_flagged(self):
        p = update_personal_best(self.particle(0.2), math.nan)
        assert p.best_fitness == 0.2
        assert p.best_position.tolist() == [3.0, 4.0]
        assert p.non_finite

    def test_negative_infinity_treated_as_non_finite(self):
        p = update_personal_best(self.particle(0.2), -math.inf)
        assert p.best_fitness == 0.2
        assert p.non_finite

    def test_engine_counts_non_finite_evaluations(self):
        def nan_left(x):
            return math.nan if x[0] < 0 else sphere(x)

        result = run(cube(-1, 1, dim=2, population=20, seed=5, max_iterations=3), nan_left)
        assert result.non_finite_evaluations > 0
        assert math.isfinite(result.best_fitness)


class TestStep:
    """Tests for one synchronous iteration."""

    def test_literal_update_hand_computed(self):
        config = SwarmConfig(bounds=((0.0, 100.0),), v_clamp=(50.0,), inertia_w=0.7,
                             cognitive_c1=1.8, social_c2=1.8, stochastic_update=False)
        state = single_particle_state(x=10.0, v=1.0, p_best=12.0, g_best=20.0)
        nxt = step(state, config, sphere)
        v = 0.7 * 1.0 + 1.8 * 2.0 + 1.8 * 10.0
        assert nxt.velocities[0, 0] == v
        assert nxt.positions[0, 0] == 10.0 + v
        assert v == pytest.approx(22.3)

    def test_literal_update_clamped_velocity(self):
        config = SwarmConfig(bounds=((0.0, 100.0),), v_clamp=(5.0,), inertia_w=0.7,
                             cognitive_c1=1.8, social_c2=1.8, stochastic_update=False)
        state = single_particle_state(x=10.0, v=1.0, p_best=12.0, g_best=20.0)
        nxt = step(state, config, sphere)
        assert nxt.velocities[0, 0] == 5.0
        assert nxt.positions[0, 0] == 15.0

    def test_pure_inertia_translates_by_velocity(self):
        config = cube(-100, 100, dim=2, inertia_w=1.0, cognitive_c1=0.0, social_c2=0.0,
                      stochastic_update=False, v_clamp=(10.0, 10.0))
        before = np.array([[1.5, -2.25], [30.0, 40.0], [-50.0, 0.125]])
        velocities = np.array([[0.5, 3.0], [-9.5, 2.75], [4.0, -1.0]])
        state = SwarmState(
            positions=before.copy(),
            velocities=velocities.copy(),
            best_positions=np.array([[0.0, 0.0], [5.0, 5.0], [-60.0, 7.0]]),
            best_fitness=np.array([0.0, 50.0, 3649.0]),
            non_finite=np.zeros(3, dtype=int),
            global_best_position=np.array([0.0, 0.0]),
            global_best_fitness=0.0,
            rng=np.random.default_rng(0),
        )
        nxt = step(state, config, sphere)
        assert np.array_equal(nxt.positions, before + velocities)

    def test_particle_at_rest_on_both_bests_stays(self):
        config = SwarmConfig(bounds=((0.0, 100.0),), seed=7)
        state = single_particle_state(x=30.0, v=0.0, p_best=30.0, g_best=30.0,
                                      p_fitness=900.0, g_fitness=900.0)
        for _ in range(50):
            state = step(state, config, sphere)
        assert state.positions[0, 0] == 30.0
        assert state.velocities[0, 0] == 0.0

    def test_bound_hit_zeroes_velocity(self):
        config = SwarmConfig(bounds=((0.0, 10.0),), v_clamp=(5.0,), inertia_w=1.0,
                             cognitive_c1=0.0, social_c2=0.0, stochastic_update=False)
        state = single_particle_state(x=8.0, v=4.0, p_best=8.0, g_best=8.0)
        nxt = step(state, config, sphere)
        assert nxt.positions[0, 0] == 10.0
        assert nxt.velocities[0, 0] == 0.0

    def test_iteration_increments(self):
        config = cube(-5, 5, population=4, seed=8)
        state = initialize_swarm(config, sphere)
        assert step(state, config, sphere).iteration == 1

    def test_state_requires_a_generator(self):
        with pytest.raises(TypeError):
            SwarmState(
                positions=np.zeros((1, 1)),
                velocities=np.zeros((1, 1)),
                best_positions=np.zeros((1, 1)),
                best_fitness=np.zeros(1),
                non_finite=np.zeros(1, dtype=int),
                global_best_position=np.zeros(1),
                global_best_fitness=0.0,
            )

    def test_objective_errors_propagate(self):
        def broken(x):
            raise RuntimeError("boom")

        with pytest.raises(RuntimeError):
            initialize_swarm(cube(-1, 1, population=2), broken)


class TestEngineProperties:
    """Randomized property checks over many seeded steps."""

    @pytest.mark.parametrize("seed", range(10))
    def test_bounds_clamp_and_monotone_best(self, seed):
        rng = np.random.default_rng(1000 + seed)
        dim = int(rng.integers(1, 5))
        low = rng.uniform(-50, 0, dim)
        high = low + rng.uniform(1, 100, dim)
        config = SwarmConfig(
            bounds=tuple(zip(low.tolist(), high.tolist())),
            population=int(rng.integers(1, 30)),
            inertia_w=float(rng.uniform(0, 1.2)),
            cognitive_c1=float(rng.uniform(0, 3)),
            social_c2=float(rng.uniform(0, 3)),
            seed=seed,
        )
        shift = rng.uniform(low, high)

        def shifted(x):
            return float(np.sum(np.abs(x - shift)))

        state = initialize_swarm(config, shifted)
        previous_best = state.best_fitness.copy()
        previous_global = state.global_best_fitness
        for _ in range(1000):
            state = step(state, config, shifted)
            assert np.all(state.positions >= config.lower)
            assert np.all(state.positions <= config.upper)
            assert np.all(np.abs(state.velocities) <= config.clamp)
            assert np.all(state.best_fitness <= previous_best)
            assert state.global_best_fitness <= previous_global
            assert state.global_best_fitness == state.best_fitness.min()
            previous_best = state.best_fitness.copy()
            previous_global = state.global_best_fitness

    def test_run_is_bit_reproducible(self):
        config = cube(-5, 5, population=30, seed=9, max_iterations=200, fitness_tolerance=0.0)
        a, b = run(config, sphere), run(config, sphere)
        assert a.trace.rows() == b.trace.rows()
        assert np.array_equal(a.best_position, b.best_position)

    def test_parallel_evaluation_matches_sequential(self):
        config = cube(-5, 5, population=30, seed=10, max_iterations=100, fitness_tolerance=0.0)
        a = run(config, sphere)
        b = run(replace(config, workers=4), sphere)
        assert a.trace.rows() == b.trace.rows()
        assert np.array_equal(a.best_position, b.best_position)

    def test_run_opens_one_evaluation_pool(self, monkeypatch):
        opened = []

        class CountingPool(ThreadPoolExecutor):
            def __init__(self, *args, **kwargs):
                opened.append(self)
                super().__init__(*args, **kwargs)

        monkeypatch.setattr(pso, "ThreadPoolExecutor", CountingPool)
        config = cube(-5, 5, population=12, seed=16, max_iterations=25, fitness_tolerance=0.0, workers=3)
        result = run(config, sphere)
        assert result.iterations == 25
        assert len(opened) == 1

    def test_step_reuses_given_pool(self):
        config = cube(-5, 5, population=12, seed=17, workers=3)
        with ThreadPoolExecutor(max_workers=3) as executor:
            a = step(initialize_swarm(config, sphere, executor), config, sphere, executor)
        b = step(initialize_swarm(replace(config, workers=1), sphere), config, sphere)
        assert np.array_equal(a.positions, b.positions)
        assert a.global_best_fitness == b.global_best_fitness


class TestRun:
    """Tests for the run loop and termination."""

    def test_sphere_converges(self):
        config = cube(-5, 5, population=100, seed=11, max_iterations=1000,
                      inertia_w=0.7298, cognitive_c1=1.49618, social_c2=1.49618)
        result = run(config, sphere)
        assert result.best_fitness < 1e-6
        assert result.termination == pso.TERMINATION_TOLERANCE
        assert result.iterations < 1000

    def test_infinite_tolerance_stops_at_iteration_zero(self):
        result = run(cube(-5, 5, population=10, seed=12, fitness_tolerance=math.inf), sphere)
        assert result.iterations == 0
        assert result.termination == pso.TERMINATION_TOLERANCE
        assert result.trace.rows() == [(0, result.best_fitness)]

    def test_zero_budget_reports_initial_best(self):
        config = cube(-5, 5, population=10, seed=13, max_iterations=0)
        state = initialize_swarm(config, sphere)
        result = run(config, sphere)
        assert result.termination == pso.TERMINATION_BUDGET
        assert result.best_fitness == state.global_best_fitness

    def test_budget_exhaustion(self):
        result = run(cube(-5, 5, population=5, seed=14, max_iterations=7, fitness_tolerance=0.0), sphere)
        assert result.termination == pso.TERMINATION_BUDGET
        assert result.iterations == 7
        assert [it for it, _ in result.trace.rows()] == list(range(8))

    def test_trace_non_increasing(self):
        result = run(cube(-5, 5, population=20, seed=15, max_iterations=300), sphere)
        values = result.trace.fitness
        assert all(b <= a for a, b in zip(values, values[1:]))


class TestConvergenceTrace:
    """Tests for the trace container."""

    def test_iterations_must_increase(self):
        trace = ConvergenceTrace()
        trace.record(0, 1.0)
        with pytest.raises(ValueError):
            trace.record(0, 0.5)

    def test_value_at_holds_last_value(self):
        trace = ConvergenceTrace()
        for it, value in enumerate([5.0, 2.0, 1.0]):
            trace.record(it, value)
        assert trace.value_at(1) == 2.0
        assert trace.value_at(1000) == 1.0

    def test_convergence_ratio(self):
        trace = ConvergenceTrace()
        trace.record(0, 1.0)
        trace.record(100, 0.02)
        trace.record(1000, 0.01)
        assert trace.convergence_ratio(100, 1000) == pytest.approx(2.0)

    def test_convergence_ratio_floor(self):
        trace = ConvergenceTrace()
        trace.record(0, 1.0)
        trace.record(100, 6e-3)
        trace.record(150, 9.5e-7)
        assert trace.convergence_ratio(100, 1000) == pytest.approx(6e-3 / 9.5e-7)
        assert trace.convergence_ratio(100, 1000, floor=1e-2) == 1.0
        assert trace.convergence_ratio(0, 1000, floor=1e-2) == pytest.approx(100.0)

    def test_negative_floor_rejected(self):
        trace = ConvergenceTrace()
        trace.record(0, 1.0)
        with pytest.raises(ValueError):
            trace.convergence_ratio(0, 0, floor=-1.0)

    def test_csv_schema(self, tmp_path):
        trace = ConvergenceTrace()
        trace.record(0, 0.5)
        trace.record(1, 0.1)
        path = tmp_path / "trace.csv"
        trace.to_csv(str(path))
        assert path.read_text() == "iteration,global_best_fitness\n0,0.5\n1,0.1\n"
