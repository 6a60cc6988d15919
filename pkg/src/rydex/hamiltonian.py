"""Exact and effective Hamiltonians for dressed two-level chains.

Exact model (rad/us):

    H = sum_i Omega_i/2 sigma_x^i + sum_i Delta_i n_i + sum_{i<j} V_ij n_i n_j

with n_i the exciton projector on site i and V_ij = c6/r_ij^6.  In the weak
dressing regime Omega_i << |Delta_i| the second-order effective model over a
fixed exciton-number manifold is a hard-core boson Hamiltonian

    H_eff = sum_i mu_i n_i + sum_{i<j} J_ij (a_i^+ a_j + h.c.)
            + sum_{i<j} U_ij n_i n_j

with closed-form coefficients

    I_ij = Omega_j^2 V_ij / (4 Delta_j (Delta_j + V_ij))
    J_ij = sum_{b in {i,j}} Omega_i Omega_j V_ij / (8 Delta_b (Delta_b + V_ij))
    mu_i = Delta_i + Omega_i^2/(2 Delta_i) + sum_{j != i} I_ij
    U_ij = V_ij - 2 (I_ij + I_ji)

The numerical oracle `van_vleck_oracle` evaluates the same second-order
quasi-degenerate perturbation theory directly from the exact matrix and is the
reference the closed forms are tested against.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basis import Dimer, ExcitationNumber, Full, Sector, SubspaceBasis, build_basis
from .errors import (DimensionCapError, FacilitationResonanceError,
                     PerturbativeValidityError, SingularDenominatorError)
from .lattice import ChainSpec, DressingProfile

VALIDITY_RATIO = 0.25       # Omega_i <= ratio * |Delta_i|
FACILITATION_RATIO = 0.10   # |Delta_b + V_ij| >= ratio * |Delta_b|
_GUARD_SLACK = 1.0 - 1e-9   # admit parameter sets sitting exactly on the guard


def _position_lookup(basis: SubspaceBasis) -> np.ndarray:
    if basis.n_sites > 20:
        raise DimensionCapError("bitmask lookup limited to 20 sites")
    lookup = np.full(2**basis.n_sites, -1, dtype=np.int64)
    lookup[basis.states] = np.arange(basis.dimension)
    return lookup


class ExactHamiltonian:
    """Exact chain Hamiltonian over the full configuration basis.

    `matrix(t)` assembles a sparse CSR snapshot; for constant dressing the
    snapshot is cached.  Matrix elements: diagonal sum_i Delta_i b_i +
    sum_{i<j} V_ij b_i b_j, off-diagonal Omega_i/2 between configurations
    differing by one bit flip.
    """

    def __init__(self, chain: ChainSpec, dressing: DressingProfile):
        if dressing.n_sites != chain.n_sites:
            raise ValueError("dressing and chain disagree on the site count")
        self.chain = chain
        self.dressing = dressing
        self.basis = build_basis(chain.n_sites, Full())
        occ = self.basis.occupations()
        v = chain.interaction_matrix()
        self._interaction_diag = 0.5 * np.einsum("ki,ij,kj->k", occ, v, occ)
        self._occ = occ
        # one COO block per site: rows are every configuration, cols the flip
        n = chain.n_sites
        states = self.basis.states
        self._flip_rows = np.concatenate([states for _ in range(n)])
        self._flip_cols = np.concatenate([states ^ (1 << i) for i in range(n)])
        self._flip_site = np.concatenate([np.full(len(states), i) for i in range(n)])
        self._cached: sp.csr_matrix | None = None

    @property
    def is_constant(self) -> bool:
        return self.dressing.is_constant

    def diagonal(self, t: float = 0.0) -> np.ndarray:
        return self._occ @ self.dressing.detuning_at(t) + self._interaction_diag

    def matrix(self, t: float = 0.0) -> sp.csr_matrix:
        if self.is_constant and self._cached is not None:
            return self._cached
        omega = self.dressing.rabi_at(t)
        dim = self.basis.dimension
        data = 0.5 * omega[self._flip_site]
        h = sp.coo_matrix((data, (self._flip_rows, self._flip_cols)),
                          shape=(dim, dim)).tocsr()
        h = h + sp.diags(self.diagonal(t))
        h = h.tocsr()
        if self.is_constant:
            self._cached = h
        return h


def build_exact(chain: ChainSpec, dressing: DressingProfile) -> ExactHamiltonian:
    """Construct the exact Hamiltonian handle (sparse snapshots via .matrix)."""
    return ExactHamiltonian(chain, dressing)


def _check_guards(omega: np.ndarray, delta: np.ndarray, v: np.ndarray,
                  pair_mask: np.ndarray, validity_ratio: float,
                  facilitation_ratio: float, on_violation: str) -> None:
    if on_violation not in ("error", "warn", "ignore"):
        raise ValueError(f"unknown guard mode {on_violation!r}")
    if on_violation == "ignore":
        return

    def report(exc_type, message):
        if on_violation == "error":
            raise exc_type(message)
        warnings.warn(message, stacklevel=3)

    bad = np.abs(omega) > validity_ratio * np.abs(delta) / _GUARD_SLACK
    if np.any(bad):
        i = int(np.argmax(bad))
        report(PerturbativeValidityError,
               f"site {i}: Omega={omega[i]:.4g} exceeds "
               f"{validity_ratio} * |Delta|={validity_ratio * abs(delta[i]):.4g}")
    n = len(omega)
    for i in range(n):
        for j in range(n):
            if i == j or not pair_mask[i, j]:
                continue
            den = delta[j] + v[i, j]
            if abs(den) < facilitation_ratio * abs(delta[j]) * _GUARD_SLACK:
                report(FacilitationResonanceError,
                       f"pair ({i},{j}): |Delta_{j} + V| = {abs(den):.4g} below "
                       f"{facilitation_ratio} * |Delta| = "
                       f"{facilitation_ratio * abs(delta[j]):.4g}")
                return


@dataclass(frozen=True)
class EffectiveModel:
    """Closed-form second-order coefficients of the dressed chain.

    mu: on-site exciton energies (includes the bare detuning).
    ising: density-density shifts I[i, j] (exciton at i, dressed ground at j).
    exchange: symmetric hopping matrix J[i, j].
    exciton_interaction: symmetric U[i, j] for doubly excited pairs.
    dimer_onsite: exact adjacent-pair energies eps_i for (i, i+1).
    dimer_exchange: adjacent-dimer hop (i, i+1) <-> (i+1, i+2), two-term form.
    """

    mu: np.ndarray
    ising: np.ndarray
    exchange: np.ndarray
    exciton_interaction: np.ndarray
    dimer_onsite: np.ndarray
    dimer_exchange: np.ndarray

    @property
    def n_sites(self) -> int:
        return len(self.mu)

    def single_exciton_matrix(self) -> np.ndarray:
        """Dense one-exciton block: diag(mu) + exchange."""
        return np.diag(self.mu) + self.exchange

    def dimer_matrix(self) -> np.ndarray:
        """Tridiagonal adjacent-dimer block: diag(eps) + dimer hops."""
        return (np.diag(self.dimer_onsite)
                + np.diag(self.dimer_exchange, 1)
                + np.diag(self.dimer_exchange, -1))


def pair_onsite_exact(chain: ChainSpec, dressing: DressingProfile, i: int, j: int,
                      t: float = 0.0) -> float:
    """Exact second-order energy of the doubly excited pair (i, j).

    Keeps the full three-body denominators (Delta_m + V_im + V_jm); the
    two-body approximation mu_i + mu_j + U_ij follows by splitting them.
    Uses the same global-constant convention as the effective model.
    """
    omega = dressing.rabi_at(t)
    delta = dressing.detuning_at(t)
    v = chain.interaction_matrix()
    vij = v[i, j]
    iij = omega[j]**2 * vij / (4.0 * delta[j] * (delta[j] + vij))
    iji = omega[i]**2 * vij / (4.0 * delta[i] * (delta[i] + vij))
    eps = (delta[i] + delta[j] + vij
           + omega[i]**2 / (2.0 * delta[i]) + omega[j]**2 / (2.0 * delta[j])
           - (iij + iji))
    for m in range(chain.n_sites):
        if m in (i, j):
            continue
        den = delta[m] + v[i, m] + v[j, m]
        eps += omega[m]**2 * (v[i, m] + v[j, m]) / (4.0 * delta[m] * den)
    return float(eps)


def pair_exchange_exact(chain: ChainSpec, dressing: DressingProfile, i: int, k: int,
                        j: int, t: float = 0.0) -> float:
    """Exact second-order hop <(i,k)|H_eff|(k,j)>: exciton i -> j past a frozen
    companion at k.  Denominators carry the companion shift V_kb."""
    omega = dressing.rabi_at(t)
    delta = dressing.detuning_at(t)
    v = chain.interaction_matrix()
    vij = v[i, j]
    out = 0.0
    for b in (i, j):
        den = delta[b] + v[k, b]
        out += omega[i] * omega[j] * vij / (8.0 * den * (den + vij))
    return float(out)


def dimer_exchange_simplified(chain: ChainSpec, dressing: DressingProfile,
                              t: float = 0.0) -> np.ndarray:
    """Single-term dimer hop approximation (homogeneous-parameter shortcut).

    Valid when (Omega, Delta, spacing) vary slowly between neighbouring sites;
    the two-term form in EffectiveModel.dimer_exchange is the reference.
    """
    omega = dressing.rabi_at(t)
    delta = dressing.detuning_at(t)
    v = chain.interaction_matrix()
    n = chain.n_sites
    out = np.zeros(max(n - 2, 0))
    for i in range(n - 2):
        den = delta[i] + v[i, i + 1]
        out[i] = (omega[i] * omega[i + 2] * v[i, i + 2]
                  / (4.0 * den * (den + v[i, i + 2])))
    return out


def derive_effective(chain: ChainSpec, dressing: DressingProfile, t: float = 0.0, *,
                     cutoff: int | None = None,
                     validity_ratio: float = VALIDITY_RATIO,
                     facilitation_ratio: float = FACILITATION_RATIO,
                     on_violation: str = "error") -> EffectiveModel:
    """Evaluate the closed-form effective coefficients at time t.

    cutoff restricts all pairwise couplings (I, J, U) to index distance
    |i - j| <= cutoff; None keeps every pair.  Guards: weak dressing
    Omega_i <= validity_ratio |Delta_i| and facilitation distance
    |Delta_b + V_ij| >= facilitation_ratio |Delta_b| (boundary admitted).
    """
    if dressing.n_sites != chain.n_sites:
        raise ValueError("dressing and chain disagree on the site count")
    n = chain.n_sites
    omega = dressing.rabi_at(t)
    delta = dressing.detuning_at(t)
    if np.any(delta == 0.0):
        raise PerturbativeValidityError("zero detuning has no perturbative window")
    v = chain.interaction_matrix()
    idx = np.arange(n)
    pair_mask = idx[:, None] != idx[None, :]
    if cutoff is not None:
        pair_mask &= np.abs(idx[:, None] - idx[None, :]) <= cutoff
    _check_guards(omega, delta, v, pair_mask, validity_ratio, facilitation_ratio,
                  on_violation)

    with np.errstate(divide="ignore", invalid="ignore"):
        ising = omega[None, :]**2 * v / (4.0 * delta[None, :] * (delta[None, :] + v))
        j_i = omega[:, None] * omega[None, :] * v / (
            8.0 * delta[:, None] * (delta[:, None] + v))
        j_j = omega[:, None] * omega[None, :] * v / (
            8.0 * delta[None, :] * (delta[None, :] + v))
    ising = np.where(pair_mask, ising, 0.0)
    exchange = np.where(pair_mask, j_i + j_j, 0.0)
    mu = delta + omega**2 / (2.0 * delta) + ising.sum(axis=1)
    interaction = np.where(pair_mask, v - 2.0 * (ising + ising.T), 0.0)

    dimer_onsite = np.array([pair_onsite_exact(chain, dressing, i, i + 1, t)
                             for i in range(n - 1)]) if n > 1 else np.zeros(0)
    dimer_exchange = np.array(
        [pair_exchange_exact(chain, dressing, i, i + 1, i + 2, t)
         for i in range(n - 2)]) if n > 2 else np.zeros(0)
    return EffectiveModel(mu=mu, ising=ising, exchange=exchange,
                          exciton_interaction=interaction,
                          dimer_onsite=dimer_onsite, dimer_exchange=dimer_exchange)


def effective_hamiltonian(model: EffectiveModel, basis: SubspaceBasis, *,
                          include_interaction: bool = True) -> sp.csr_matrix:
    """Assemble the effective model over a configuration sector.

    On Full / ExcitationNumber bases this is the hard-core boson form (number
    conserving); on the Dimer basis it is the tridiagonal adjacent-pair block.
    """
    if basis.n_sites != model.n_sites:
        raise ValueError("basis and model disagree on the site count")
    if isinstance(basis.sector, Dimer):
        return sp.csr_matrix(model.dimer_matrix())
    occ = basis.occupations()
    diag = occ @ model.mu
    if include_interaction:
        diag = diag + 0.5 * np.einsum("ki,ij,kj->k", occ,
                                      model.exciton_interaction, occ)
    lookup = _position_lookup(basis)
    rows, cols, data = [np.arange(basis.dimension)], [np.arange(basis.dimension)], [diag]
    n = model.n_sites
    states = basis.states
    for i in range(n):
        for j in range(i + 1, n):
            amp = model.exchange[i, j]
            if amp == 0.0:
                continue
            sel = (occ[:, i] == 1.0) & (occ[:, j] == 0.0)
            if not np.any(sel):
                continue
            src = lookup[states[sel]]
            dst = lookup[states[sel] ^ ((1 << i) | (1 << j))]
            if np.any(dst < 0):
                raise ValueError("hop leaves the requested sector")
            rows.extend([src, dst])
            cols.extend([dst, src])
            vals = np.full(len(src), amp)
            data.extend([vals, vals])
    dim = basis.dimension
    return sp.coo_matrix((np.concatenate(data),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(dim, dim)).tocsr()


class EffectiveHamiltonian:
    """Time-dependence handle for the effective model (re-derived per call)."""

    def __init__(self, chain: ChainSpec, dressing: DressingProfile,
                 basis: SubspaceBasis, *, cutoff: int | None = None,
                 include_interaction: bool = True, on_violation: str = "error"):
        self.chain = chain
        self.dressing = dressing
        self.basis = basis
        self.cutoff = cutoff
        self.include_interaction = include_interaction
        self.on_violation = on_violation
        self._cached: sp.csr_matrix | None = None

    @property
    def is_constant(self) -> bool:
        return self.dressing.is_constant

    def model(self, t: float = 0.0) -> EffectiveModel:
        return derive_effective(self.chain, self.dressing, t, cutoff=self.cutoff,
                                on_violation=self.on_violation)

    def matrix(self, t: float = 0.0) -> sp.csr_matrix:
        if self.is_constant and self._cached is not None:
            return self._cached
        h = effective_hamiltonian(self.model(t), self.basis,
                                  include_interaction=self.include_interaction)
        if self.is_constant:
            self._cached = h
        return h


def dressed_constant(dressing: DressingProfile, t: float = 0.0) -> float:
    """Global light-shift constant sum_j Omega_j^2 / (4 Delta_j) dropped from
    the effective model's zero of energy."""
    omega = dressing.rabi_at(t)
    delta = dressing.detuning_at(t)
    return float(np.sum(omega**2 / (4.0 * delta)))


def van_vleck_oracle(chain: ChainSpec, dressing: DressingProfile, sector: Sector,
                     t: float = 0.0, *, max_sites: int = 12,
                     degeneracy_tol: float = 1e-9) -> np.ndarray:
    """Numerical second-order quasi-degenerate perturbation theory.

    Splits the exact matrix into its diagonal H0 and the drive V', then
    evaluates, for sector states a, b and residual states m,

        H2[a, b] = 1/2 sum_m V'[a, m] V'[m, b]
                   (1/(E_a - E_m) + 1/(E_b - E_m))

    and returns diag(E_sector) + H2 + (sum_j Omega_j^2/4Delta_j) * Id, i.e.
    the same zero of energy as the closed-form model.  Independent of the
    closed forms: only the exact matrix and dense algebra enter.
    """
    if chain.n_sites > max_sites:
        raise DimensionCapError(
            f"dense oracle limited to {max_sites} sites, got {chain.n_sites}")
    h = build_exact(chain, dressing).matrix(t).toarray()
    energies = np.diag(h).copy()
    coupling = h - np.diag(energies)
    sector_basis = build_basis(chain.n_sites, sector)
    g = sector_basis.states  # full-basis positions equal the bitmask values
    r = np.setdiff1d(np.arange(h.shape[0]), g)
    w = coupling[np.ix_(g, r)]
    den = energies[g][:, None] - energies[r][None, :]
    scale = max(np.max(np.abs(energies)), 1.0)
    if np.any(np.abs(den) < degeneracy_tol * scale):
        a, m = np.unravel_index(int(np.argmin(np.abs(den))), den.shape)
        raise SingularDenominatorError(
            f"sector state {int(g[a])} degenerate with residual state "
            f"{int(r[m])} (gap {den[a, m]:.3e})")
    half = (w / den) @ w.T
    return (np.diag(energies[g]) + 0.5 * (half + half.T)
            + dressed_constant(dressing, t) * np.eye(len(g)))
