#!/usr/bin/env python3
"""
Taper Service - batch design and verification of quarter-wave tapered transformers.
Single entry point for running multi-trial swarm designs and re-checking any design
with a reflection sweep.

Usage:
    # Run the default 9-trial batch and write CSV/JSON artifacts
    batch = run_trials(RunSpec(trials=9, output_dir="output"))

    # Re-verify a design without optimizing
    sweep, at_f0 = verify([86.427, 55.545, 45.444])

    # Check the published reference rows
    rows = check_reference_designs()

Artifacts written by run_trials (in output_dir):
    summary.csv    trial,seed,fitness,z1,z2,z3,ordering_ok,gamma_db_at_f0,iterations,termination
    summary.json   same rows plus the resolved configuration
    trace_<k>.csv  iteration,global_best_fitness
    sweep_<k>.csv  frequency_hz,gamma_re,gamma_im,gamma_db

Trial k (1-based) runs with seed = base_seed + k.

Exit codes: 0 success, 1 configuration error, 2 I/O error.
"""

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pso
import txline
from matchdesign import DesignProblem, DesignResult, check_ordering, design, eq4_mismatch
from pso import ConfigurationError, SwarmConfig
from txline import DomainError, SweepPoint, SweepResult, SweepSettings

logger = logging.getLogger(__name__)


# ============================================================================
# CONFIGURATION
# ============================================================================

DEFAULT_TRIALS = 9
DEFAULT_BASE_SEED = 0
DEFAULT_OUTPUT_DIR = "output"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2

SUMMARY_FIXED = ("trial", "seed", "fitness")
SUMMARY_TAIL = ("ordering_ok", "gamma_db_at_f0", "iterations", "termination")

# Published three-section designs for a 100 ohm load on a 50 ohm line:
# (trial, reported fitness, z1, z2, z3), z1 next to the load
REFERENCE_DESIGNS = [
    (1, 0.000002, 83.828, 79.787, 67.302),
    (2, 0.000007, 86.427, 55.545, 45.444),
    (3, 0.00051, 76.604, 65.646, 60.595),
    (4, 0.000034, 95.949, 76.757, 56.567),
    (5, 0.000174, 78.77, 67.66, 60.73),
    (6, 0.000022, 90.012, 14.131, 11.101),
    (7, 0.000009, 98.979, 28.264, 20.191),
    (8, 0.00016, 96.435, 30.292, 22.212),
    (9, 0.000005, 80.797, 36.922, 32.313),
]

# config-file key -> default; keys mirror the long flag names
DEFAULTS: Dict[str, Any] = {
    "trials": DEFAULT_TRIALS,
    "seed": DEFAULT_BASE_SEED,
    "particles": pso.DEFAULT_POPULATION,
    "w": pso.DEFAULT_INERTIA,
    "c1": pso.DEFAULT_COGNITIVE,
    "c2": pso.DEFAULT_SOCIAL,
    "bounds": "10,120",
    "vclamp": None,
    "max-iters": pso.DEFAULT_MAX_ITERATIONS,
    "tol": pso.DEFAULT_FITNESS_TOLERANCE,
    "zload": 100.0,
    "ztarget": 50.0,
    "sections": 3,
    "penalty": 1000.0,
    "no-ordering": False,
    "f0": txline.DEFAULT_F0,
    "sweep": f"{txline.DEFAULT_F_START},{txline.DEFAULT_F_STOP},{txline.DEFAULT_N_POINTS}",
    "out": DEFAULT_OUTPUT_DIR,
    "deterministic-update": False,
    "workers": 1,
}


@dataclass(frozen=True)
class RunSpec:
    """Everything a batch needs: trial count, seeds, problem, swarm, sweep and output."""
    trials: int = DEFAULT_TRIALS
    base_seed: int = DEFAULT_BASE_SEED
    problem: DesignProblem = field(default_factory=DesignProblem)
    swarm: SwarmConfig = field(default_factory=SwarmConfig)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    output_dir: str = DEFAULT_OUTPUT_DIR
    workers: int = 1

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigurationError(f"trials must be >= 1, got {self.trials}")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")
        if self.base_seed < 0 or self.base_seed + self.trials >= 2 ** 64:
            raise ConfigurationError("seeds base_seed+1..base_seed+trials must fit in 64 bits")
        self.problem.validate()
        self.sweep.validate()
        replace(self.swarm, bounds=self.problem.swarm_bounds()).validate()

    def seed_for(self, trial: int) -> int:
        return self.base_seed + trial

    def swarm_for(self, trial: int) -> SwarmConfig:
        return replace(self.swarm, seed=self.seed_for(trial), bounds=self.problem.swarm_bounds())


# ============================================================================
# SERVICE API
# ============================================================================

@dataclass
class TrialResult:
    """Result of one seeded design trial."""
    success: bool
    trial: int
    seed: int
    design: Optional[DesignResult] = None
    error: Optional[str] = None

    def to_row(self, n_sections: int) -> List[str]:
        if not self.success or self.design is None:
            return [str(self.trial), str(self.seed), ""] + [""] * n_sections + ["", "", "", "error"]
        d = self.design
        return (
            [str(self.trial), str(self.seed), _num(d.fitness)]
            + [_num(z) for z in d.impedances]
            + [_bool(d.ordering_ok), _num(d.verified_db_at_f0), str(d.iterations), d.termination]
        )

    def to_dict(self) -> dict:
        out = {"success": self.success, "trial": self.trial, "seed": self.seed, "error": self.error}
        if self.design is not None:
            d = self.design
            out.update({
                "fitness": d.fitness,
                "impedances": [float(z) for z in d.impedances],
                "ordering_ok": d.ordering_ok,
                "gamma_db_at_f0": d.verified_db_at_f0,
                "iterations": d.iterations,
                "termination": d.termination,
                "non_finite_evaluations": d.non_finite_evaluations,
            })
        return out


def _num(value: float) -> str:
    """Shortest decimal that round-trips."""
    return repr(float(value))


def _bool(value: bool) -> str:
    return "true" if value else "false"


def summary_header(n_sections: int) -> List[str]:
    return list(SUMMARY_FIXED) + [f"z{k}" for k in range(1, n_sections + 1)] + list(SUMMARY_TAIL)


def run_trial(spec: RunSpec, trial: int) -> TrialResult:
    """Run trial ``trial`` (1-based) of the batch."""
    seed = spec.seed_for(trial)
    try:
        result = design(spec.problem, spec.swarm_for(trial), spec.sweep)
    except (ConfigurationError, DomainError) as e:
        logger.error('Trial %d (seed %d) configuration error: %s', trial, seed, e)
        return TrialResult(success=False, trial=trial, seed=seed, error=str(e))
    logger.info('Trial %d (seed %d): fitness=%.6g ordering_ok=%s %s after %d iterations',
                trial, seed, result.fitness, result.ordering_ok, result.termination, result.iterations)
    return TrialResult(success=True, trial=trial, seed=seed, design=result)


def write_trial_artifacts(result: TrialResult, output_dir: str) -> None:
    if result.design is None:
        return
    result.design.trace.to_csv(os.path.join(output_dir, f"trace_{result.trial}.csv"))
    if result.design.sweep is not None:
        result.design.sweep.to_csv(os.path.join(output_dir, f"sweep_{result.trial}.csv"))


def run_trials(spec: RunSpec) -> Dict[str, Any]:
    """
    Run every trial and write the batch artifacts.

    Args:
        spec: Validated run specification

    Returns:
        {
            "results": [TrialResult, ...],   # trial order
            "summary": {
                "total": int,
                "successful": int,
                "failed": int,
                "ordered": int,
            }
        }

    Raises:
        ConfigurationError: invalid spec (nothing is run)
        OSError: output directory or files cannot be written
    """
    spec.validate()
    trials = list(range(1, spec.trials + 1))

    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(run_trial, [spec] * len(trials), trials))
    else:
        results = [run_trial(spec, k) for k in trials]

    os.makedirs(spec.output_dir, exist_ok=True)
    for result in results:
        write_trial_artifacts(result, spec.output_dir)

    n = spec.problem.n_sections
    with open(os.path.join(spec.output_dir, "summary.csv"), "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(summary_header(n))
        for result in results:
            writer.writerow(result.to_row(n))

    summary = {
        "total": len(results),
        "successful": sum(1 for r in results if r.success),
        "failed": sum(1 for r in results if not r.success),
        "ordered": sum(1 for r in results if r.design is not None and r.design.ordering_ok),
    }
    with open(os.path.join(spec.output_dir, "summary.json"), "w", encoding="utf-8") as f:
        json.dump({
            "config": spec_to_dict(spec),
            "summary": summary,
            "trials": [r.to_dict() for r in results],
        }, f, indent=2)

    return {"results": results, "summary": summary}


def verify(impedances: Sequence[float], z_load: float = 100.0, z_ref: float = 50.0,
           f0: float = txline.DEFAULT_F0, grid: Optional[Sequence[float]] = None,
           csv_path: Optional[str] = None) -> Tuple[SweepResult, SweepPoint]:
    """
    Sweep an existing design without running the optimizer.

    Args:
        impedances: Section impedances, load-adjacent first
        z_load, z_ref: Load and reference line impedances (ohm)
        f0: Frequency where every section is a quarter wave
        grid: Sweep frequencies (default 1-9 GHz, 201 points)
        csv_path: Where to write the sweep CSV, if anywhere

    Returns:
        (sweep, reflection at f0)
    """
    if len(impedances) < 3:
        raise ConfigurationError(f"verify needs at least 3 impedances, got {len(impedances)}")
    sections = txline.quarter_wave_sections(impedances)
    if grid is None:
        grid = txline.frequency_grid()
    result = txline.sweep(sections, z_load, z_ref, f0, grid)
    at_f0 = txline.sweep(sections, z_load, z_ref, f0, [f0]).points[0]
    if result.flagged:
        logger.warning('Verify: %d of %d sweep points are singular', len(result.flagged), len(result))
    if csv_path:
        result.to_csv(csv_path)
    return result, at_f0


def check_reference_designs(z_load: float = 100.0, z_ref: float = 50.0,
                            f0: float = txline.DEFAULT_F0) -> List[Dict[str, Any]]:
    """Manifold product, ordering, closed-form mismatch and dB at f0 of each published row."""
    problem = DesignProblem(z_load=z_load, z_target=z_ref)
    problem.validate()
    rows = []
    for trial, reported, *z in REFERENCE_DESIGNS:
        try:
            _, at_f0 = verify(z, z_load, z_ref, f0, grid=[f0])
        except DomainError as e:
            raise ConfigurationError(str(e))
        rows.append({
            "trial": trial,
            "reported_fitness": reported,
            "impedances": z,
            "product": z[0] * z[2] / z[1],
            "mismatch": eq4_mismatch(z, problem),
            "ordering_ok": check_ordering(z),
            "gamma_db_at_f0": at_f0.magnitude_db,
        })
    return rows


# ============================================================================
# CONFIG RESOLUTION
# ============================================================================

def _float_list(value: Any, name: str, count: Optional[int] = None) -> List[float]:
    if isinstance(value, str):
        parts = [p for p in value.replace(" ", "").split(",") if p]
    elif isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        parts = [value]
    try:
        out = [float(p) for p in parts]
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name}: expected numbers, got {value!r}")
    if count is not None and len(out) != count:
        raise ConfigurationError(f"{name}: expected {count} values, got {len(out)}")
    return out


def _int(value: Any, name: str) -> int:
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name}: expected an integer, got {value!r}")
    if not number.is_integer():
        raise ConfigurationError(f"{name}: expected an integer, got {value!r}")
    return int(number)


def _float(value: Any, name: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name}: expected a number, got {value!r}")


def _bool_value(value: Any, name: str) -> bool:
    """JSON true/false or the strings "true"/"false"; anything else is rejected."""
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("true", "false"):
        return value.strip().lower() == "true"
    raise ConfigurationError(f"{name}: expected true or false, got {value!r}")


def load_config_file(path: str) -> Dict[str, Any]:
    """Flat JSON object keyed by long flag names (without dashes prefix)."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"config file {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path}: expected a JSON object")
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise ConfigurationError(f"config file {path}: unknown keys {unknown}")
    return data


def resolve_values(flags: Dict[str, Any], config_path: Optional[str] = None) -> Dict[str, Any]:
    """Defaults, overridden by the config file, overridden by flags that were given."""
    values = dict(DEFAULTS)
    if config_path:
        values.update(load_config_file(config_path))
    values.update({k: v for k, v in flags.items() if v is not None})
    return values


def build_spec(values: Dict[str, Any]) -> RunSpec:
    """Turn resolved key/value settings into a validated RunSpec."""
    lo, hi = _float_list(values["bounds"], "bounds", 2)
    f_start, f_stop, n_points = _float_list(values["sweep"], "sweep", 3)
    n_sections = _int(values["sections"], "sections")

    v_clamp = None
    if values["vclamp"] is not None:
        clamp = _float_list(values["vclamp"], "vclamp")
        if len(clamp) == 1:
            clamp = clamp * n_sections
        v_clamp = tuple(clamp)

    problem = DesignProblem(
        z_load=_float(values["zload"], "zload"),
        z_target=_float(values["ztarget"], "ztarget"),
        n_sections=n_sections,
        bounds=(lo, hi),
        ordering_required=not _bool_value(values["no-ordering"], "no-ordering"),
        penalty_weight=_float(values["penalty"], "penalty"),
    )
    swarm = SwarmConfig(
        population=_int(values["particles"], "particles"),
        inertia_w=_float(values["w"], "w"),
        cognitive_c1=_float(values["c1"], "c1"),
        social_c2=_float(values["c2"], "c2"),
        v_clamp=v_clamp,
        max_iterations=_int(values["max-iters"], "max-iters"),
        fitness_tolerance=_float(values["tol"], "tol"),
        stochastic_update=not _bool_value(values["deterministic-update"], "deterministic-update"),
    )
    spec = RunSpec(
        trials=_int(values["trials"], "trials"),
        base_seed=_int(values["seed"], "seed"),
        problem=problem,
        swarm=swarm,
        sweep=SweepSettings(
            f0=_float(values["f0"], "f0"),
            f_start=f_start,
            f_stop=f_stop,
            n_points=_int(n_points, "sweep points"),
        ),
        output_dir=str(values["out"]),
        workers=_int(values["workers"], "workers"),
    )
    try:
        spec.validate()
    except DomainError as e:
        raise ConfigurationError(str(e))
    return spec


def spec_to_dict(spec: RunSpec) -> Dict[str, Any]:
    """Resolved settings for summary.json; per-trial bounds and seeds and the output path are left out."""
    out = asdict(spec)
    out.pop("output_dir")
    out["swarm"].pop("bounds")
    out["swarm"].pop("seed")
    return out


# ============================================================================
# CLI
# ============================================================================

class _ArgumentParser(argparse.ArgumentParser):
    """argparse that reports bad flags as configuration errors instead of exiting 2."""

    def error(self, message):
        raise ConfigurationError(message)


def _parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(description="Design quarter-wave tapered transformers by particle swarm")
    parser.add_argument("--config", "-c", help="JSON config file (keys mirror long flag names)")
    parser.add_argument("--trials", type=int, help=f"Number of trials (default: {DEFAULT_TRIALS})")
    parser.add_argument("--seed", type=int, help="Base seed; trial k uses seed+k")
    parser.add_argument("--particles", type=int, help="Swarm population")
    parser.add_argument("--w", type=float, help="Inertia weight")
    parser.add_argument("--c1", type=float, help="Cognitive coefficient")
    parser.add_argument("--c2", type=float, help="Social coefficient")
    parser.add_argument("--bounds", metavar="LO,HI", help="Impedance bounds in ohm")
    parser.add_argument("--vclamp", help="Velocity clamp, one value or one per section")
    parser.add_argument("--max-iters", dest="max_iters", type=int, help="Iteration budget")
    parser.add_argument("--tol", type=float, help="Fitness tolerance")
    parser.add_argument("--zload", type=float, help="Load resistance (ohm)")
    parser.add_argument("--ztarget", type=float, help="Target line impedance (ohm)")
    parser.add_argument("--sections", type=int, help="Number of quarter-wave sections")
    parser.add_argument("--penalty", type=float, help="Ordering penalty weight per ohm")
    parser.add_argument("--no-ordering", dest="no_ordering", action="store_const", const=True,
                        help="Drop the decreasing-impedance constraint")
    parser.add_argument("--f0", type=float, help="Design frequency (Hz)")
    parser.add_argument("--sweep", metavar="START,STOP,POINTS", help="Sweep grid")
    parser.add_argument("--out", "-o", help=f"Output directory (default: {DEFAULT_OUTPUT_DIR})")
    parser.add_argument("--deterministic-update", dest="deterministic_update",
                        action="store_const", const=True, help="Use r1 = r2 = 1 in the velocity update")
    parser.add_argument("--workers", type=int, help="Trials run in parallel")
    parser.add_argument("--verify", metavar="Z1,Z2,Z3[,...]",
                        help="Sweep the given design (load-adjacent first) instead of optimizing")
    parser.add_argument("--check-reference", action="store_true",
                        help="Verify the published reference designs")
    parser.add_argument("--log-level", default="WARNING", help="Logging level (default: WARNING)")
    return parser


def _flags(args: argparse.Namespace) -> Dict[str, Any]:
    return {key: getattr(args, key.replace("-", "_")) for key in DEFAULTS}


def _print_table(results: List[TrialResult]) -> None:
    print(f"{'Trial':>5}  {'Fitness':>12}  Impedances (ohm)")
    for r in results:
        if r.design is None:
            print(f"{r.trial:>5}  {'-':>12}  ❌ {r.error}")
            continue
        zs = "  ".join(f"{z:8.3f}" for z in r.design.impedances)
        mark = "✅" if r.design.ordering_ok else "❌"
        print(f"{r.trial:>5}  {r.design.fitness:>12.6g}  {zs}  {mark}")


def _fail(kind: str, message: str) -> None:
    print(f"error={kind} message={json.dumps(' '.join(str(message).split()))}", file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Command-line interface; returns the process exit code."""
    try:
        args = _parser().parse_args(argv)
        logging.basicConfig(
            level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        values = resolve_values(_flags(args), args.config)

        if args.check_reference:
            for row in check_reference_designs(_float(values["zload"], "zload"),
                                               _float(values["ztarget"], "ztarget"),
                                               _float(values["f0"], "f0")):
                mark = "✅" if row["ordering_ok"] and row["gamma_db_at_f0"] <= -40 else "❌"
                print(f"{mark} trial {row['trial']}: product={row['product']:.4f} "
                      f"mismatch={row['mismatch']:.3g} gamma_db_at_f0={row['gamma_db_at_f0']:.2f}")
            return EXIT_OK

        if args.verify:
            impedances = _float_list(args.verify, "verify")
            f_start, f_stop, n_points = _float_list(values["sweep"], "sweep", 3)
            out_dir = str(values["out"])
            os.makedirs(out_dir, exist_ok=True)
            try:
                _, at_f0 = verify(impedances,
                               z_load=_float(values["zload"], "zload"),
                               z_ref=_float(values["ztarget"], "ztarget"),
                               f0=_float(values["f0"], "f0"),
                               grid=txline.frequency_grid(f_start, f_stop, _int(n_points, "sweep points")),
                               csv_path=os.path.join(out_dir, "sweep_verify.csv"))
            except DomainError as e:
                raise ConfigurationError(str(e))
            print(f"gamma_db_at_f0={_num(at_f0.magnitude_db)}")
            print(f"vswr_at_f0={_num(at_f0.vswr)}")
            return EXIT_OK

        spec = build_spec(values)
        batch = run_trials(spec)
    except ConfigurationError as e:
        _fail("configuration", e)
        return EXIT_CONFIG
    except OSError as e:
        _fail("io", e)
        return EXIT_IO

    _print_table(batch["results"])
    print(f"Summary: {batch['summary']}")
    print(f"Saved to {spec.output_dir}")
    return EXIT_OK if batch["summary"]["failed"] == 0 else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
