"""Three-sublattice band description of the phase-modulated dressed chain.

A unit cell holds sublattices (a, b, c) with drive phases offset by
(+pi/4, 0, -pi/4); the closed-form hoppings and potentials below follow from
the synthetic-exchange expressions with homogeneous detuning, giving a
generalized Rice-Mele model on the (k, phi) torus.  phi is pi-periodic and
kl ranges over (-pi, pi].

Chern numbers use the gauge-invariant plaquette (link-variable) field
strength, which returns exact integers already on coarse grids.  The torus
orientation is fixed so that the adiabatic displacement per cycle equals
the band Chern number times the cell length, matching the real-space pump.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .basis import ExcitationNumber, QuantumState, SubspaceBasis, build_basis
from .errors import DegenerateBandError, FacilitationResonanceError, \
    PerturbativeValidityError
from .hamiltonian import FACILITATION_RATIO, VALIDITY_RATIO, _GUARD_SLACK
from .lattice import tanh_phase_ramp

_OFFSETS = (math.pi / 4.0, 0.0, -math.pi / 4.0)


@dataclass(frozen=True)
class RiceMeleCoefficients:
    """Closed-form band parameters at one modulation phase.

    j_* are bond hoppings (ab, bc and the cell-crossing ca), mu_* sublattice
    potentials.  energy_scale is the single-site light shift Omega^2/2Delta,
    interaction_scale the interaction-assisted exchange scale
    Omega^2 V / (4 Delta (Delta + V)).  The *_nnn fields carry the
    second-neighbour corrections and are None when not requested.
    """

    phi: float
    j_a: float
    j_b: float
    j_c: float
    mu_a: float
    mu_b: float
    mu_c: float
    energy_scale: float
    interaction_scale: float
    nnn_scale: float | None = None
    j_a_nnn: float | None = None   # a_i <-> c_i
    j_b_nnn: float | None = None   # b_i <-> a_{i+1}
    j_c_nnn: float | None = None   # c_i <-> b_{i+1}
    dmu_a: float | None = None
    dmu_b: float | None = None
    dmu_c: float | None = None

    @property
    def has_nnn(self) -> bool:
        return self.nnn_scale is not None


def _guard(omega: float, delta: float, interactions, on_violation: str) -> None:
    if on_violation not in ("error", "warn", "ignore"):
        raise ValueError("on_violation must be error, warn or ignore")
    if on_violation == "ignore":
        return
    problems = []
    if omega > VALIDITY_RATIO * abs(delta) / _GUARD_SLACK:
        problems.append((PerturbativeValidityError,
                         f"peak drive {omega:.4g} exceeds "
                         f"{VALIDITY_RATIO} |Delta|"))
    for v in interactions:
        if abs(delta + v) < FACILITATION_RATIO * abs(delta) * _GUARD_SLACK:
            problems.append((FacilitationResonanceError,
                             f"Delta + V = {delta + v:.4g} is within "
                             f"{FACILITATION_RATIO} |Delta| of resonance"))
    for exc, msg in problems:
        if on_violation == "error":
            raise exc(msg)
        warnings.warn(msg, stacklevel=3)


def exchange_scale(omega: float, delta: float, v: float) -> float:
    """Interaction-assisted exchange prefactor Omega^2 V / 4 Delta (Delta+V)."""
    return omega**2 * v / (4.0 * delta * (delta + v))


def coefficients(omega: float, delta: float, v_nn: float, phi: float,
                 v_nnn: float | None = None, *,
                 on_violation: str = "error") -> RiceMeleCoefficients:
    """Evaluate the closed-form band parameters at modulation phase phi.

    The sublattice drives are Omega sin^2(phi + offset) with offsets
    (+pi/4, 0, -pi/4); hoppings multiply the two bond drives, potentials
    collect the light shift plus both neighbour dressing shifts.
    """
    _guard(omega, delta, (v_nn,) if v_nnn is None else (v_nn, v_nnn),
           on_violation)
    sa = math.sin(phi + _OFFSETS[0]) ** 2
    sb = math.sin(phi + _OFFSETS[1]) ** 2
    sc = math.sin(phi + _OFFSETS[2]) ** 2
    e_scale = omega**2 / (2.0 * delta)
    u = exchange_scale(omega, delta, v_nn)
    base = dict(
        phi=phi,
        j_a=u * sa * sb, j_b=u * sb * sc, j_c=u * sc * sa,
        mu_a=e_scale * sa**2 + u * (sb**2 + sc**2),
        mu_b=e_scale * sb**2 + u * (sc**2 + sa**2),
        mu_c=e_scale * sc**2 + u * (sa**2 + sb**2),
        energy_scale=e_scale, interaction_scale=u)
    if v_nnn is None:
        return RiceMeleCoefficients(**base)
    u2 = exchange_scale(omega, delta, v_nnn)
    return RiceMeleCoefficients(
        **base, nnn_scale=u2,
        j_a_nnn=u2 * sa * sc, j_b_nnn=u2 * sb * sa, j_c_nnn=u2 * sc * sb,
        dmu_a=u2 * (sb**2 + sc**2), dmu_b=u2 * (sc**2 + sa**2),
        dmu_c=u2 * (sa**2 + sb**2))


@dataclass(frozen=True)
class BlochHamiltonian:
    """3x3 Bloch family H(kl, phi) of the three-sublattice chain.

    Hermitian for every argument, 2 pi periodic in kl and pi periodic in
    phi.  Set v_nnn to fold in the second-neighbour corrections.
    """

    omega: float
    delta: float
    v_nn: float
    v_nnn: float | None = None
    on_violation: str = "error"

    def coefficients(self, phi: float) -> RiceMeleCoefficients:
        return coefficients(self.omega, self.delta, self.v_nn, phi,
                            self.v_nnn, on_violation=self.on_violation)

    def matrix(self, kl: float, phi: float) -> np.ndarray:
        return self.matrix_grid(np.atleast_1d(float(kl)),
                                np.atleast_1d(float(phi)))[0, 0]

    def matrix_grid(self, kls: np.ndarray, phis: np.ndarray) -> np.ndarray:
        """Stacked Bloch matrices, shape (len(phis), len(kls), 3, 3)."""
        kls = np.asarray(kls, dtype=float)
        phis = np.asarray(phis, dtype=float)
        coeff = [self.coefficients(p) for p in phis]
        phase = np.exp(-1j * kls)
        out = np.zeros((len(phis), len(kls), 3, 3), dtype=np.complex128)
        for i, c in enumerate(coeff):
            out[i, :, 0, 0] = c.mu_a
            out[i, :, 1, 1] = c.mu_b
            out[i, :, 2, 2] = c.mu_c
            out[i, :, 0, 1] = c.j_a
            out[i, :, 1, 2] = c.j_b
            out[i, :, 0, 2] = c.j_c * phase
            if c.has_nnn:
                out[i, :, 0, 0] += c.dmu_a
                out[i, :, 1, 1] += c.dmu_b
                out[i, :, 2, 2] += c.dmu_c
                out[i, :, 0, 2] += c.j_a_nnn
                out[i, :, 1, 0] += c.j_b_nnn * phase
                out[i, :, 2, 1] += c.j_c_nnn * phase
        lower = np.swapaxes(out, -1, -2).conj()
        diag = np.zeros_like(out)
        idx = np.arange(3)
        diag[..., idx, idx] = out[..., idx, idx]
        return out + lower - diag


def _torus_grids(n_k: int, n_phi: int) -> tuple[np.ndarray, np.ndarray]:
    kls = -np.pi + 2.0 * np.pi * np.arange(n_k) / n_k
    phis = np.pi * np.arange(n_phi) / n_phi
    return kls, phis


def band_energies(bloch: BlochHamiltonian, n_k: int = 64, n_phi: int = 64,
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sorted band energies on the discretized torus:
    (phis, kls, energies[n_phi, n_k, 3])."""
    kls, phis = _torus_grids(n_k, n_phi)
    vals = np.linalg.eigvalsh(bloch.matrix_grid(kls, phis))
    return phis, kls, vals


def band_gaps(bloch: BlochHamiltonian, n_k: int = 96,
              n_phi: int = 192) -> tuple[float, float]:
    """Global minima of the (lower, middle) and (middle, upper) band gaps."""
    _, _, vals = band_energies(bloch, n_k, n_phi)
    lower_mid = float(np.min(vals[..., 1] - vals[..., 0]))
    mid_upper = float(np.min(vals[..., 2] - vals[..., 1]))
    return lower_mid, mid_upper


def berry_curvature(bloch: BlochHamiltonian, n_k: int = 64, n_phi: int = 64,
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Plaquette Berry flux per band on the (phi, k) grid.

    Returns (phis, kls, flux[n_phi, n_k, 3]); each band's flux sums to
    2 pi times its Chern number, oriented so the flux gives the pump
    displacement directly.
    """
    kls, phis = _torus_grids(n_k, n_phi)
    mats = bloch.matrix_grid(kls, phis)
    vals, vecs = np.linalg.eigh(mats)
    # floor relative to the band-structure spread so exact touchings are
    # flagged even when hoppings vanish
    gap_floor = 1e-9 * (float(vals.max() - vals.min()) + 1e-300)
    gaps = np.diff(vals, axis=-1)
    if np.min(gaps) < gap_floor:
        where = np.unravel_index(np.argmin(np.min(gaps, axis=-1)), gaps.shape[:2])
        raise DegenerateBandError(
            f"bands touch near phi index {where[0]}, k index {where[1]}")
    link_phi = np.einsum("pkon,pkon->pkn", vecs.conj(),
                         np.roll(vecs, -1, axis=0))
    link_k = np.einsum("pkon,pkon->pkn", vecs.conj(),
                       np.roll(vecs, -1, axis=1))
    plaquette = (link_k * np.roll(link_phi, -1, axis=1)
                 * np.roll(link_k, -1, axis=0).conj() * link_phi.conj())
    return phis, kls, np.angle(plaquette)


def chern_numbers(bloch: BlochHamiltonian,
                  grid: tuple[int, int] = (64, 64)) -> tuple[int, int, int]:
    """Integer Chern number of each band (ascending energy order).

    Plaquette fluxes are summed per band; the result must sit within 1e-6 of
    an integer, otherwise the grid straddles a band touching and a
    degenerate-band error is raised.
    """
    n_k, n_phi = grid
    _, _, flux = berry_curvature(bloch, n_k, n_phi)
    totals = flux.sum(axis=(0, 1)) / (2.0 * np.pi)
    rounded = np.rint(totals)
    if np.max(np.abs(totals - rounded)) > 1e-6:
        raise DegenerateBandError(
            f"non-integer band flux {totals}; refine the grid or check gaps")
    return tuple(int(c) for c in rounded)


@dataclass(frozen=True)
class PumpSchedule:
    """Monotone modulation ramp phi(t) covering [0, pi] over one period."""

    period: float
    steepness: float = 5.6

    def __post_init__(self):
        if self.period <= 0.0:
            raise ValueError("pump period must be positive")

    def phi(self, t):
        return tanh_phase_ramp(t, self.period, self.steepness)


def pump_schedule(period: float, steepness: float = 5.6) -> PumpSchedule:
    return PumpSchedule(period, steepness)


def pump_initial_state(n_sites: int, cell: int) -> QuantumState:
    """Equal superposition of the c site of `cell` and the a site of the next
    cell, the state that homogeneously fills the upper band at phi = 0."""
    site_c = 3 * cell + 2
    site_a = 3 * cell + 3
    if cell < 0 or site_a >= n_sites:
        raise ValueError(
            f"cell {cell} has no next-cell partner on {n_sites} sites")
    basis = build_basis(n_sites, ExcitationNumber(1))
    amp = np.zeros(basis.dimension, dtype=np.complex128)
    amp[basis.position_of(1 << site_c)] = 1.0 / np.sqrt(2.0)
    amp[basis.position_of(1 << site_a)] = 1.0 / np.sqrt(2.0)
    return QuantumState(basis, amp)


def band_populations(state: QuantumState, bloch: BlochHamiltonian,
                     phi: float = 0.0) -> np.ndarray:
    """Weight of a single-exciton state in each Bloch band (periodic cells).

    The chain length must be a multiple of three; plane waves use the same
    convention as the Bloch matrix (cell-crossing bond carries e^{-ikl}).
    """
    basis = state.basis
    if not isinstance(basis.sector, ExcitationNumber) or basis.sector.n != 1:
        raise ValueError("band decomposition needs a single-exciton state")
    n = basis.n_sites
    if n % 3 != 0:
        raise ValueError("chain length must be a multiple of the cell size 3")
    cells = n // 3
    # single-exciton basis states are ordered by site index
    amps = state.amplitudes.reshape(cells, 3)
    kls = 2.0 * np.pi * np.arange(cells) / cells
    bloch_fourier = np.exp(-1j * np.outer(kls, np.arange(cells)))
    transformed = bloch_fourier @ amps / np.sqrt(cells)
    mats = bloch.matrix_grid(kls, np.array([phi]))[0]
    _, vecs = np.linalg.eigh(mats)
    overlaps = np.einsum("kon,ko->kn", vecs.conj(), transformed)
    return (np.abs(overlaps) ** 2).sum(axis=0)
