#!/usr/bin/env python3
"""
Ideal lossless transmission lines as ABCD (chain) two-ports.

Used to verify a matching design independently of the optimizer: each section is a
lossless TEM line whose electrical length scales linearly with frequency
(90 degrees at f0 for a quarter-wave section), sections are cascaded by matrix
product, and the input impedance seen from the reference line gives the reflection
coefficient over a frequency sweep.

Section order: index 0 is the section ADJACENT TO THE LOAD (the highest impedance
in a tapered design). The cascade seen from the reference side therefore runs
through the sections in reverse order.

Usage:
    sections = [LineSection(86.427), LineSection(55.545), LineSection(45.444)]
    result = sweep(sections, z_load=100, z_ref=50, f0=5e9, grid=frequency_grid())
    result.at(5e9).magnitude_db
    result.to_csv("sweep.csv")
"""

import cmath
import csv
import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)


# ============================================================================
# CONFIGURATION
# ============================================================================

QUARTER_WAVE_DEG = 90.0
DB_FLOOR = -120.0

DEFAULT_F0 = 5e9
DEFAULT_F_START = 1e9
DEFAULT_F_STOP = 9e9
DEFAULT_N_POINTS = 201

# Zin denominator guard, relative to |a*ZL| + |b|
SINGULAR_RTOL = 1e-12

SWEEP_HEADER = ("frequency_hz", "gamma_re", "gamma_im", "gamma_db")


class DomainError(ValueError):
    """Physically meaningless input (nonpositive impedance or frequency)."""


class SingularityError(ArithmeticError):
    """A division in the network equations has a (near) zero denominator."""


@dataclass(frozen=True)
class SweepSettings:
    """Design frequency and the sweep grid around it."""
    f0: float = DEFAULT_F0
    f_start: float = DEFAULT_F_START
    f_stop: float = DEFAULT_F_STOP
    n_points: int = DEFAULT_N_POINTS

    def validate(self) -> None:
        if not self.f0 > 0:
            raise DomainError(f"f0 must be > 0, got {self.f0}")
        if not 0 < self.f_start <= self.f_stop:
            raise DomainError(f"sweep needs 0 < start <= stop, got {self.f_start}..{self.f_stop}")
        if self.n_points < 1:
            raise DomainError(f"sweep needs at least one point, got {self.n_points}")

    def grid(self) -> np.ndarray:
        return frequency_grid(self.f_start, self.f_stop, self.n_points)


def frequency_grid(f_start: float = DEFAULT_F_START, f_stop: float = DEFAULT_F_STOP,
                   n_points: int = DEFAULT_N_POINTS) -> np.ndarray:
    """Evenly spaced frequencies, both ends included."""
    return np.linspace(f_start, f_stop, n_points)


# ============================================================================
# TWO-PORTS
# ============================================================================

@dataclass(frozen=True)
class LineSection:
    """One line section: characteristic impedance (ohm) and electrical length at f0 (degrees)."""
    z0: float
    electrical_length_at_f0: float = QUARTER_WAVE_DEG

    def __post_init__(self):
        if not (math.isfinite(self.z0) and self.z0 > 0):
            raise DomainError(f"z0 must be a positive finite impedance, got {self.z0}")
        if not math.isfinite(self.electrical_length_at_f0):
            raise DomainError(f"electrical length must be finite, got {self.electrical_length_at_f0}")


@dataclass(frozen=True)
class TwoPort:
    """ABCD chain matrix [[a, b], [c, d]]; b in ohm, c in siemens."""
    a: complex = 1 + 0j
    b: complex = 0j
    c: complex = 0j
    d: complex = 1 + 0j

    @classmethod
    def identity(cls) -> "TwoPort":
        return cls()

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "TwoPort":
        return cls(complex(m[0, 0]), complex(m[0, 1]), complex(m[1, 0]), complex(m[1, 1]))

    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=complex)

    @property
    def determinant(self) -> complex:
        return self.a * self.d - self.b * self.c

    def __matmul__(self, other: "TwoPort") -> "TwoPort":
        return TwoPort.from_matrix(self.matrix() @ other.matrix())


def line_two_port(section: LineSection, frequency: float, f0: float) -> TwoPort:
    """Chain matrix of a lossless line at ``frequency``.

    theta = electrical_length_at_f0 * frequency / f0;
    a = d = cos(theta), b = j*z0*sin(theta), c = j*sin(theta)/z0.
    """
    if not f0 > 0:
        raise DomainError(f"f0 must be > 0, got {f0}")
    if frequency < 0:
        raise DomainError(f"frequency must be >= 0, got {frequency}")
    theta = math.radians(section.electrical_length_at_f0 * frequency / f0)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    return TwoPort(
        a=complex(cos_t),
        b=1j * section.z0 * sin_t,
        c=1j * sin_t / section.z0,
        d=complex(cos_t),
    )


def cascade(ports: Sequence[TwoPort]) -> TwoPort:
    """Matrix product of ``ports`` in the given order (source side first)."""
    if not ports:
        return TwoPort.identity()
    return TwoPort.from_matrix(reduce(np.matmul, [p.matrix() for p in ports]))


def input_impedance(port: TwoPort, z_load: complex) -> complex:
    """Zin = (a*ZL + b) / (c*ZL + d)."""
    num = port.a * z_load + port.b
    den = port.c * z_load + port.d
    if abs(den) <= SINGULAR_RTOL * (abs(port.a * z_load) + abs(port.b)):
        raise SingularityError(f"input impedance undefined for ZL={z_load}: denominator {den}")
    return num / den


def _to_db(magnitude: float) -> float:
    if magnitude <= 0:
        return DB_FLOOR
    return max(DB_FLOOR, 20.0 * math.log10(magnitude))


def reflection(z_in: complex, z_ref: float) -> Tuple[complex, float]:
    """Reflection coefficient against a real reference and its magnitude in dB (floored)."""
    if not z_ref > 0:
        raise DomainError(f"reference impedance must be > 0, got {z_ref}")
    if cmath.isinf(z_in):
        # open circuit
        return 1 + 0j, 0.0
    den = z_in + z_ref
    if den == 0:
        raise SingularityError(f"reflection undefined for z_in = -z_ref = {z_in}")
    gamma = (z_in - z_ref) / den
    return complex(gamma), _to_db(abs(gamma))


# ============================================================================
# SWEEP
# ============================================================================

@dataclass(frozen=True)
class SweepPoint:
    frequency: float
    gamma: complex
    magnitude_db: float
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def vswr(self) -> float:
        mag = abs(self.gamma)
        if not mag < 1:
            return math.inf
        return (1 + mag) / (1 - mag)


@dataclass
class SweepResult:
    """Reflection seen from the reference line, one point per grid frequency."""
    points: List[SweepPoint] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def flagged(self) -> List[SweepPoint]:
        return [p for p in self.points if not p.ok]

    def at(self, frequency: float) -> SweepPoint:
        """Grid point nearest to ``frequency``."""
        if not self.points:
            raise ValueError("empty sweep")
        return min(self.points, key=lambda p: abs(p.frequency - frequency))

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(SWEEP_HEADER)
            for p in self.points:
                writer.writerow((repr(float(p.frequency)), repr(p.gamma.real),
                                 repr(p.gamma.imag), repr(float(p.magnitude_db))))


def network_two_port(sections: Sequence[LineSection], frequency: float, f0: float) -> TwoPort:
    """Cascade from the reference side: load-adjacent section (index 0) comes last."""
    return cascade([line_two_port(s, frequency, f0) for s in reversed(sections)])


def sweep(sections: Sequence[LineSection], z_load: float, z_ref: float, f0: float,
          grid: Sequence[float]) -> SweepResult:
    """Reflection of the loaded cascade at each grid frequency.

    A singular point is flagged (gamma and dB set to NaN, ``error`` filled) and the
    sweep carries on.
    """
    if not z_load > 0:
        raise DomainError(f"load must be > 0, got {z_load}")
    if not z_ref > 0:
        raise DomainError(f"reference impedance must be > 0, got {z_ref}")
    if not f0 > 0:
        raise DomainError(f"f0 must be > 0, got {f0}")
    grid = [float(f) for f in grid]
    if not grid:
        raise DomainError("sweep grid is empty")
    if any(not f > 0 for f in grid):
        raise DomainError("sweep grid frequencies must be > 0")

    result = SweepResult()
    for f in grid:
        try:
            z_in = input_impedance(network_two_port(sections, f, f0), z_load)
            gamma, db = reflection(z_in, z_ref)
            result.points.append(SweepPoint(f, gamma, db))
        except SingularityError as e:
            logger.warning('Singular point at %s Hz: %s', f, e)
            result.points.append(SweepPoint(f, complex(math.nan, math.nan), math.nan, error=str(e)))
    return result


def quarter_wave_sections(impedances: Sequence[float]) -> List[LineSection]:
    """Quarter-wave sections, load-adjacent first."""
    return [LineSection(float(z)) for z in impedances]


def closed_form_input_impedance(impedances: Sequence[float], z_load: float) -> float:
    """Zin at f0 of a quarter-wave cascade by repeated Zin = Z0^2 / ZL."""
    z = float(z_load)
    for z0 in impedances:
        z = z0 * z0 / z
    return z
