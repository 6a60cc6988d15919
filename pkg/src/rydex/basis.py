"""Configuration bases for chains of two-level atoms.

Basis states are bitmasks: bit i set means site i carries an exciton, site 0
is the least significant bit.  States are listed in ascending bitmask order,
so index(states[k]) == k.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from .errors import EmptyPostSelectionError, EmptySectorError


@dataclass(frozen=True)
class Full:
    """All 2^n configurations."""


@dataclass(frozen=True)
class ExcitationNumber:
    """Configurations with exactly n excitons."""

    n: int


@dataclass(frozen=True)
class Dimer:
    """Adjacent two-exciton states (i, i+1) on an open chain (n-1 states)."""


Sector = Full | ExcitationNumber | Dimer


class SubspaceBasis:
    """Ordered bitmask basis of a sector of the chain Hilbert space."""

    def __init__(self, n_sites: int, sector: Sector, states: np.ndarray):
        self.n_sites = n_sites
        self.sector = sector
        self.states = states
        self.index = {int(s): k for k, s in enumerate(states)}
        self._occupations: np.ndarray | None = None

    @property
    def dimension(self) -> int:
        return len(self.states)

    def occupations(self) -> np.ndarray:
        """(dimension, n_sites) 0/1 matrix, entry [k, i] = bit i of state k."""
        if self._occupations is None:
            bits = (self.states[:, None] >> np.arange(self.n_sites)[None, :]) & 1
            self._occupations = bits.astype(np.float64)
        return self._occupations

    def excitation_counts(self) -> np.ndarray:
        return self.occupations().sum(axis=1)

    def position_of(self, state: int) -> int:
        try:
            return self.index[int(state)]
        except KeyError:
            raise EmptySectorError(
                f"configuration {state:#x} not in sector {self.sector}") from None

    def label(self, k: int) -> str:
        s = int(self.states[k])
        return "".join("r" if (s >> i) & 1 else "g" for i in range(self.n_sites))

    def __repr__(self) -> str:
        return (f"SubspaceBasis(n_sites={self.n_sites}, sector={self.sector}, "
                f"dimension={self.dimension})")


@lru_cache(maxsize=None)
def _cached_basis(n_sites: int, sector: Sector) -> SubspaceBasis:
    if isinstance(sector, Full):
        states = np.arange(2**n_sites, dtype=np.int64)
    elif isinstance(sector, ExcitationNumber):
        if not 0 <= sector.n <= n_sites:
            raise EmptySectorError(
                f"no states with {sector.n} excitons on {n_sites} sites")
        states = np.sort(np.array(
            [sum(1 << i for i in combo)
             for combo in combinations(range(n_sites), sector.n)], dtype=np.int64))
    elif isinstance(sector, Dimer):
        if n_sites < 2:
            raise EmptySectorError("dimer sector needs at least two sites")
        states = np.array([(1 << i) | (1 << (i + 1)) for i in range(n_sites - 1)],
                          dtype=np.int64)
    else:
        raise TypeError(f"unknown sector {sector!r}")
    return SubspaceBasis(n_sites, sector, states)


def build_basis(n_sites: int, sector: Sector = Full()) -> SubspaceBasis:
    """Construct (and cache per (n_sites, sector)) an ordered sector basis."""
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")
    return _cached_basis(n_sites, sector)


class QuantumState:
    """Pure state over a SubspaceBasis; norm validated to 1e-10 on construction."""

    def __init__(self, basis: SubspaceBasis, amplitudes, *, normalize: bool = False):
        amp = np.asarray(amplitudes, dtype=np.complex128)
        if amp.shape != (basis.dimension,):
            raise ValueError(f"amplitude shape {amp.shape} does not match basis "
                             f"dimension {basis.dimension}")
        norm = np.linalg.norm(amp)
        if normalize:
            if norm == 0.0:
                raise ValueError("cannot normalize the zero vector")
            amp = amp / norm
        elif abs(norm - 1.0) > 1e-10:
            raise ValueError(f"state norm {norm!r} deviates from 1 beyond 1e-10")
        self.basis = basis
        self.amplitudes = amp

    @classmethod
    def basis_state(cls, basis: SubspaceBasis, configuration: int) -> "QuantumState":
        amp = np.zeros(basis.dimension, dtype=np.complex128)
        amp[basis.position_of(configuration)] = 1.0
        return cls(basis, amp)

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_density(self) -> "DensityOperator":
        return DensityOperator(self.basis, np.outer(self.amplitudes,
                                                    self.amplitudes.conj()))

    def overlap(self, other: "QuantumState") -> complex:
        if other.basis is not self.basis and not np.array_equal(
                other.basis.states, self.basis.states):
            raise ValueError("states live on different bases")
        return complex(np.vdot(other.amplitudes, self.amplitudes))


class DensityOperator:
    """Mixed state over a SubspaceBasis (Hermitian, unit trace within 1e-8)."""

    def __init__(self, basis: SubspaceBasis, matrix, *, check: bool = True):
        mat = np.asarray(matrix, dtype=np.complex128)
        if mat.shape != (basis.dimension, basis.dimension):
            raise ValueError("density matrix shape does not match basis dimension")
        if check:
            if np.max(np.abs(mat - mat.conj().T)) > 1e-10:
                raise ValueError("density matrix is not Hermitian within 1e-10")
            tr = np.trace(mat).real
            if abs(tr - 1.0) > 1e-8:
                raise ValueError(f"density matrix trace {tr!r} deviates from 1")
        self.basis = basis
        self.matrix = mat

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix))

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


def _as_populations(state: QuantumState | DensityOperator) -> np.ndarray:
    return state.populations()


def sector_probability(state: QuantumState | DensityOperator, n_excitons: int) -> float:
    """Total weight carried by configurations with exactly n excitons."""
    counts = state.basis.excitation_counts()
    return float(_as_populations(state)[counts == n_excitons].sum())


def project_to_sector(state: QuantumState | DensityOperator, n_excitons: int, *,
                      probability_floor: float = 1e-12,
                      ) -> tuple[DensityOperator, float]:
    """Measurement-style refinement onto the n-exciton sector.

    Models a projective site-resolved readout followed by post-selection:
    rho_p = p^{-1} sum_k p_k |k><k| over sector configurations k, so the result
    is diagonal in the configuration basis.  Returns (rho_p on the sector
    basis, p).  Projecting an already-refined in-sector state is the identity.
    """
    basis = state.basis
    pops = _as_populations(state)
    counts = basis.excitation_counts()
    mask = counts == n_excitons
    if not np.any(mask):
        raise EmptySectorError(
            f"sector n={n_excitons} is empty for {basis.n_sites} sites")
    p = float(pops[mask].sum())
    if p < probability_floor:
        raise EmptyPostSelectionError(
            f"post-selection probability {p:.3e} below floor {probability_floor:.1e}")
    target = build_basis(basis.n_sites, ExcitationNumber(n_excitons))
    refined = np.zeros(target.dimension)
    positions = [target.position_of(int(s)) for s in basis.states[mask]]
    refined[positions] = pops[mask] / p
    return DensityOperator(target, np.diag(refined.astype(np.complex128))), p


def sector_block(rho: DensityOperator, n_excitons: int, *,
                 renormalize: bool = True,
                 probability_floor: float = 1e-12,
                 ) -> tuple[DensityOperator, float]:
    """Coherent restriction of rho to the n-exciton block (coherences kept).

    Unlike project_to_sector this is not a measurement model; it is the matrix
    block Pi_n rho Pi_n used for internal factorization cross-checks.
    """
    basis = rho.basis
    counts = basis.excitation_counts()
    mask = counts == n_excitons
    if not np.any(mask):
        raise EmptySectorError(
            f"sector n={n_excitons} is empty for {basis.n_sites} sites")
    block = rho.matrix[np.ix_(mask, mask)]
    p = float(np.trace(block).real)
    if p < probability_floor:
        raise EmptyPostSelectionError(
            f"sector weight {p:.3e} below floor {probability_floor:.1e}")
    target = build_basis(basis.n_sites, ExcitationNumber(n_excitons))
    order = np.argsort([target.position_of(int(s)) for s in basis.states[mask]])
    block = block[np.ix_(order, order)]
    if renormalize:
        block = block / p
    return DensityOperator(target, block, check=renormalize), p
