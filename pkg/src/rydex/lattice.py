"""Chain geometry, van der Waals interactions and dressing-laser schedules.

Unit conventions used throughout the package: energies and rates are angular
frequencies in rad/us, times in us, lengths in um.  A value quoted as
"X/2pi = f MHz" therefore enters as X = 2*pi*f rad/us.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DisorderOrderingError, InvalidPairError

TWO_PI = 2.0 * math.pi


def mhz(value: float) -> float:
    """Convert a linear frequency in MHz (the X/2pi convention) to rad/us."""
    return TWO_PI * value


def tanh_phase_ramp(t, period: float, steepness: float = 5.6):
    """Smooth 0 -> pi pump phase, phi(0) = 0 and phi(T) = pi exactly.

    phi(t)/pi = 1/2 + tanh(s (t/T - 1/2)) / (2 tanh(s/2)).
    """
    x = np.asarray(t, dtype=float) / period - 0.5
    phi = math.pi * (0.5 + np.tanh(steepness * x) / (2.0 * math.tanh(steepness / 2.0)))
    return phi if phi.ndim else float(phi)


@dataclass(frozen=True)
class Constant:
    """Time-independent schedule."""

    value: float

    def at(self, t: float) -> float:
        return self.value


@dataclass(frozen=True)
class PumpModulated:
    """Rabi schedule peak * sin^2(phi(t) + offset) with the tanh pump ramp.

    offset distinguishes the three sublattice classes (+pi/4, 0, -pi/4).
    """

    peak: float
    offset: float
    period: float
    steepness: float = 5.6

    def at(self, t: float) -> float:
        phi = tanh_phase_ramp(t, self.period, self.steepness)
        return self.peak * math.sin(phi + self.offset) ** 2


Schedule = Constant | PumpModulated


def _as_schedule(value) -> Schedule:
    if isinstance(value, (Constant, PumpModulated)):
        return value
    return Constant(float(value))


@dataclass(frozen=True)
class ChainSpec:
    """Geometry of a 1-D chain of interacting two-level (ground/exciton) atoms.

    positions are um along the chain axis; c6 is the van der Waals coefficient
    in rad/us * um^6, V(r) = c6 / r^6.  For periodic chains the interaction
    distance is the minimum image on a ring of circumference n_sites*spacing.
    """

    n_sites: int
    spacing: float
    c6: float
    positions: tuple[float, ...]
    disorder_sigma: float = 0.0
    periodic: bool = False

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError(f"need at least one site, got {self.n_sites}")
        if len(self.positions) != self.n_sites:
            raise ValueError("positions length does not match n_sites")
        if self.spacing <= 0.0:
            raise ValueError("spacing must be positive")
        diffs = np.diff(self.positions)
        if self.n_sites > 1 and not np.all(diffs > 0.0):
            raise ValueError("site positions must be strictly increasing")

    @classmethod
    def regular(cls, n_sites: int, spacing: float, c6: float, *,
                disorder_sigma: float = 0.0, periodic: bool = False) -> "ChainSpec":
        pos = tuple(i * spacing for i in range(n_sites))
        return cls(n_sites, spacing, c6, pos, disorder_sigma, periodic)

    @classmethod
    def from_interaction_ratio(cls, n_sites: int, spacing: float, v_over_delta: float,
                               delta: float, *, disorder_sigma: float = 0.0,
                               periodic: bool = False) -> "ChainSpec":
        """Fix c6 from the nearest-neighbour ratio V(spacing) = v_over_delta * delta."""
        c6 = v_over_delta * delta * spacing**6
        return cls.regular(n_sites, spacing, c6, disorder_sigma=disorder_sigma,
                           periodic=periodic)

    def separation(self, i: int, j: int) -> float:
        if i == j or not (0 <= i < self.n_sites and 0 <= j < self.n_sites):
            raise InvalidPairError(f"invalid pair ({i}, {j}) for {self.n_sites} sites")
        r = abs(self.positions[i] - self.positions[j])
        if self.periodic:
            circumference = self.n_sites * self.spacing
            r = min(r, circumference - r)
        return r

    def interaction(self, i: int, j: int) -> float:
        """Pairwise van der Waals shift V(r_ij) = c6 / r_ij^6 in rad/us."""
        return self.c6 / self.separation(i, j) ** 6

    def interaction_matrix(self) -> np.ndarray:
        """Symmetric (n, n) matrix of V(r_ij), zero diagonal."""
        v = np.zeros((self.n_sites, self.n_sites))
        for i in range(self.n_sites):
            for j in range(i + 1, self.n_sites):
                v[i, j] = v[j, i] = self.interaction(i, j)
        return v


def vdw_interaction(chain: ChainSpec, i: int, j: int) -> float:
    """Module-level alias for ChainSpec.interaction."""
    return chain.interaction(i, j)


def sample_disorder(chain: ChainSpec, seed: int, *, max_retries: int = 100) -> ChainSpec:
    """Gaussian positional disorder along the chain axis, one draw per site.

    Draws are resampled (bounded retries) until the site ordering survives,
    which at sigma << spacing virtually never triggers.  Deterministic per seed.
    """
    if chain.disorder_sigma == 0.0:
        return chain
    rng = np.random.default_rng(seed)
    base = np.asarray(chain.positions)
    for _ in range(max_retries):
        pos = base + rng.normal(0.0, chain.disorder_sigma, size=chain.n_sites)
        if chain.n_sites == 1 or np.all(np.diff(pos) > 0.0):
            return replace(chain, positions=tuple(pos))
    raise DisorderOrderingError(
        f"could not draw ordered positions after {max_retries} tries "
        f"(sigma={chain.disorder_sigma}, spacing={chain.spacing})")


@dataclass(frozen=True)
class DressingProfile:
    """Per-site Rabi frequencies Omega_i(t) and detunings Delta_i(t).

    Weak-dressing validity (Omega <= eps_v |Delta|) is enforced where the
    effective model is derived, not here, so exact-model runs stay unrestricted.
    """

    rabi: tuple[Schedule, ...]
    detuning: tuple[Schedule, ...]

    def __post_init__(self):
        if len(self.rabi) != len(self.detuning):
            raise ValueError("rabi and detuning lists must have equal length")
        for sched in self.rabi:
            if isinstance(sched, Constant) and sched.value < 0.0:
                raise ValueError("constant Rabi frequencies must be >= 0")
        for sched in self.detuning:
            if isinstance(sched, Constant) and sched.value == 0.0:
                raise ValueError("detunings must be nonzero")

    @property
    def n_sites(self) -> int:
        return len(self.rabi)

    @property
    def is_constant(self) -> bool:
        return all(isinstance(s, Constant) for s in self.rabi + self.detuning)

    def rabi_at(self, t: float = 0.0) -> np.ndarray:
        return np.array([s.at(t) for s in self.rabi])

    def detuning_at(self, t: float = 0.0) -> np.ndarray:
        return np.array([s.at(t) for s in self.detuning])

    @classmethod
    def homogeneous(cls, n_sites: int, omega: float, delta: float) -> "DressingProfile":
        return cls(tuple(Constant(omega) for _ in range(n_sites)),
                   tuple(Constant(delta) for _ in range(n_sites)))

    @classmethod
    def from_arrays(cls, omega, delta) -> "DressingProfile":
        return cls(tuple(Constant(float(o)) for o in omega),
                   tuple(Constant(float(d)) for d in delta))

    @classmethod
    def pump(cls, n_sites: int, omega_peak: float, delta: float, period: float,
             *, steepness: float = 5.6) -> "DressingProfile":
        """Three-sublattice pump drive: offsets (+pi/4, 0, -pi/4) repeating."""
        offsets = (math.pi / 4.0, 0.0, -math.pi / 4.0)
        rabi = tuple(PumpModulated(omega_peak, offsets[i % 3], period, steepness)
                     for i in range(n_sites))
        return cls(rabi, tuple(Constant(delta) for _ in range(n_sites)))


@dataclass(frozen=True)
class NoiseSpec:
    """Markovian noise rates: exciton dephasing gamma, exciton decay kappa.

    Both are bare rates in 1/us (no 2pi), matching how they are quoted.
    """

    gamma: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.gamma < 0.0 or self.kappa < 0.0:
            raise ValueError("noise rates must be >= 0")

    @property
    def is_noisy(self) -> bool:
        return self.gamma > 0.0 or self.kappa > 0.0
