"""Time evolution engines: unitary, Lindblad, quantum-trajectory, and the
single-exciton dephasing-transport reference equation.

All engines take either a constant operator (scipy sparse / ndarray) or a
time-dependence handle exposing `.matrix(t)` and `.is_constant`.  Times are
us, generators rad/us.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from .basis import DensityOperator, QuantumState, SubspaceBasis
from .errors import DimensionCapError, StiffnessError
from .lattice import NoiseSpec

METHODS = ("auto", "krylov", "dense-expm", "adaptive-rk")


@dataclass(frozen=True)
class EvolutionConfig:
    """Numerical controls shared by the evolution engines.

    dt_max bounds the macro-step for time-dependent generators (midpoint
    sampling of the schedule), dense_cap bounds the basis dimension accepted
    by the vectorized Lindblad route, propagator_cap bounds the dimension for
    which trajectory stepping precomputes dense propagators.
    """

    t_final: float
    n_samples: int = 101
    dt_max: float = 0.02
    method: str = "auto"
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    norm_tol: float = 1e-7
    trajectory_count: int = 200
    seed: int = 0
    dense_cap: int = 512
    propagator_cap: int = 2048
    bisection_levels: int = 10

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.t_final < 0 or self.n_samples < 2:
            raise ValueError("need t_final >= 0 and at least two samples")

    def sample_times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.n_samples)


class _Handle:
    """Uniform wrapper over constant operators and .matrix(t) handles."""

    def __init__(self, h):
        if sp.issparse(h) or isinstance(h, np.ndarray):
            mat = sp.csr_matrix(h)
            self._const = mat
            self.is_constant = True
            self.dim = mat.shape[0]
        elif hasattr(h, "matrix"):
            self._handle = h
            self.is_constant = bool(h.is_constant)
            self._const = h.matrix(0.0) if self.is_constant else None
            self.dim = h.matrix(0.0).shape[0]
        else:
            raise TypeError(f"cannot interpret {type(h).__name__} as a Hamiltonian")

    def matrix(self, t: float = 0.0) -> sp.csr_matrix:
        if self._const is not None:
            return self._const
        return self._handle.matrix(t)


@dataclass
class StateSeries:
    """Pure-state samples: states[k] are the amplitudes at times[k]."""

    basis: SubspaceBasis | None
    times: np.ndarray
    states: np.ndarray

    def state(self, k: int) -> QuantumState:
        return QuantumState(self.basis, self.states[k], normalize=True)

    def populations(self) -> np.ndarray:
        pops = np.abs(self.states) ** 2
        return pops / pops.sum(axis=1, keepdims=True)


@dataclass
class DensitySeries:
    """Mixed-state samples: matrices[k] is rho at times[k]."""

    basis: SubspaceBasis | None
    times: np.ndarray
    matrices: np.ndarray

    def density(self, k: int) -> DensityOperator:
        return DensityOperator(self.basis, self.matrices[k])

    def populations(self) -> np.ndarray:
        return np.real(np.einsum("tii->ti", self.matrices))


@dataclass
class TrajectoryResult:
    """Ensemble-averaged configuration populations with standard errors."""

    basis: SubspaceBasis | None
    times: np.ndarray
    populations: np.ndarray
    populations_sem: np.ndarray
    n_trajectories: int
    jump_counts: np.ndarray


def _check_norm_drift(norms: np.ndarray, cfg: EvolutionConfig, label: str) -> None:
    drift = float(np.max(np.abs(norms - 1.0)))
    budget = cfg.norm_tol * max(1.0, cfg.t_final)
    if drift > budget:
        raise StiffnessError(
            f"{label} drifted by {drift:.3e} (budget {budget:.1e}); reduce dt_max "
            f"or tighten tolerances")


def evolve_unitary(hamiltonian, psi0: QuantumState, cfg: EvolutionConfig,
                   sample_times: np.ndarray | None = None) -> StateSeries:
    """Schrodinger evolution of a pure state.

    Constant generators use a single Krylov propagation over the sample grid
    ("krylov", exact to machine precision); time-dependent generators are
    stepped with midpoint-sampled piecewise-constant propagators of length
    <= dt_max.  "dense-expm" precomputes one dense step propagator;
    "adaptive-rk" hands the ODE to solve_ivp.
    """
    h = _Handle(hamiltonian)
    times = cfg.sample_times() if sample_times is None else np.asarray(sample_times)
    psi = psi0.amplitudes.astype(np.complex128)
    method = cfg.method
    if method == "auto":
        method = "krylov"

    if method == "adaptive-rk":
        def rhs(t, y):
            return -1j * (h.matrix(t) @ y)
        sol = solve_ivp(rhs, (times[0], times[-1]), psi, t_eval=times,
                        method="DOP853", rtol=cfg.rel_tol, atol=cfg.abs_tol)
        if not sol.success:
            raise StiffnessError(f"adaptive integration failed: {sol.message}")
        states = sol.y.T.astype(np.complex128)
    elif h.is_constant and method == "krylov" and _is_uniform(times):
        mat, shift = _centered(h.matrix())
        states = expm_multiply(-1j * mat, psi, start=float(times[0] - times[0]),
                               stop=float(times[-1] - times[0]), num=len(times),
                               endpoint=True)
        states = states * np.exp(-1j * shift * (times - times[0]))[:, None]
    else:
        states = np.empty((len(times), h.dim), dtype=np.complex128)
        states[0] = psi
        dense_step = None
        phase = 0.0
        for k in range(len(times) - 1):
            t0, t1 = float(times[k]), float(times[k + 1])
            n_sub = max(1, math.ceil((t1 - t0) / cfg.dt_max)) if not h.is_constant else 1
            dt = (t1 - t0) / n_sub
            for s in range(n_sub):
                tm = t0 + (s + 0.5) * dt
                mat, shift = _centered(h.matrix(tm))
                phase += shift * dt
                if method == "dense-expm":
                    if dense_step is None or not h.is_constant:
                        dense_step = scipy.linalg.expm(-1j * mat.toarray() * dt)
                    psi = dense_step @ psi
                else:
                    psi = expm_multiply(-1j * dt * mat, psi)
            states[k + 1] = psi * np.exp(-1j * phase)

    _check_norm_drift(np.linalg.norm(states, axis=1), cfg, "state norm")
    return StateSeries(psi0.basis, times, states)


def _is_uniform(times: np.ndarray) -> bool:
    if len(times) < 3:
        return True
    dt = np.diff(times)
    return bool(np.all(np.abs(dt - dt[0]) < 1e-12 * max(abs(times[-1]), 1.0)))


def _centered(mat: sp.csr_matrix) -> tuple[sp.csr_matrix, float]:
    """Subtract the diagonal midpoint (a global phase) to shrink the norm
    seen by the exponential, a large saving for strongly interacting chains."""
    diag = mat.diagonal().real
    shift = 0.5 * (float(diag.max()) + float(diag.min()))
    if shift == 0.0:
        return mat.astype(np.complex128), 0.0
    out = (mat - shift * sp.identity(mat.shape[0], format="csr")).tocsr()
    return out.astype(np.complex128), shift


def dephasing_operators(basis: SubspaceBasis, gamma: float) -> list[sp.csr_matrix]:
    """Jump operators sqrt(gamma) n_i (diagonal exciton projectors)."""
    occ = basis.occupations()
    root = math.sqrt(gamma)
    return [sp.diags(root * occ[:, i]).tocsr() for i in range(basis.n_sites)]


def decay_operators(basis: SubspaceBasis, kappa: float) -> list[sp.csr_matrix]:
    """Jump operators sqrt(kappa) sigma_-^i; the basis must contain the
    decayed configurations (use the full basis when kappa > 0)."""
    occ = basis.occupations()
    states = basis.states
    root = math.sqrt(kappa)
    ops = []
    for i in range(basis.n_sites):
        src = np.nonzero(occ[:, i] == 1.0)[0]
        targets = states[src] ^ (1 << i)
        try:
            dst = np.array([basis.position_of(int(s)) for s in targets])
        except Exception as exc:
            raise ValueError(
                "decay leaves the basis sector; use the full basis for "
                "kappa > 0") from exc
        ops.append(sp.coo_matrix((np.full(len(src), root), (dst, src)),
                                 shape=(basis.dimension,) * 2).tocsr())
    return ops


def noise_operators(basis: SubspaceBasis, noise: NoiseSpec) -> list[sp.csr_matrix]:
    ops: list[sp.csr_matrix] = []
    if noise.gamma > 0.0:
        ops.extend(dephasing_operators(basis, noise.gamma))
    if noise.kappa > 0.0:
        ops.extend(decay_operators(basis, noise.kappa))
    return ops


def _superoperator(h: sp.csr_matrix, jumps: list[sp.csr_matrix]) -> sp.csr_matrix:
    """Vectorized Lindblad generator, row-major flattening vec(A rho B) =
    (A kron B^T) vec(rho)."""
    dim = h.shape[0]
    ident = sp.identity(dim, format="csr")
    lind = -1j * (sp.kron(h, ident) - sp.kron(ident, h.T))
    for c in jumps:
        cdc = (c.conj().T @ c).tocsr()
        lind = lind + sp.kron(c, c.conj())
        lind = lind - 0.5 * (sp.kron(cdc, ident) + sp.kron(ident, cdc.T))
    return lind.tocsr()


def evolve_lindblad(hamiltonian, noise: NoiseSpec | list, rho0: DensityOperator,
                    cfg: EvolutionConfig,
                    sample_times: np.ndarray | None = None) -> DensitySeries:
    """Master-equation evolution via the vectorized generator.

    The sparse superoperator is propagated with Krylov exponentials (exact for
    constant generators, midpoint-stepped otherwise).  Basis dimensions above
    cfg.dense_cap are rejected; use evolve_trajectories there.
    """
    h = _Handle(hamiltonian)
    dim = h.dim
    if dim > cfg.dense_cap:
        raise DimensionCapError(
            f"basis dimension {dim} exceeds the dense Lindblad cap "
            f"{cfg.dense_cap}; use evolve_trajectories")
    basis = rho0.basis
    jumps = (noise_operators(basis, noise) if isinstance(noise, NoiseSpec)
             else [sp.csr_matrix(c) for c in noise])
    times = cfg.sample_times() if sample_times is None else np.asarray(sample_times)
    vec = rho0.matrix.reshape(-1).astype(np.complex128)

    if h.is_constant and _is_uniform(times) and dim <= 32:
        # tiny systems: one dense step exponential, then repeated application
        lind = _superoperator(h.matrix().astype(np.complex128), jumps)
        step = scipy.linalg.expm(lind.toarray() * float(times[1] - times[0]))
        flat = np.empty((len(times), dim * dim), dtype=np.complex128)
        flat[0] = vec
        for k in range(len(times) - 1):
            vec = step @ vec
            flat[k + 1] = vec
    elif h.is_constant and _is_uniform(times) and len(times) > 2:
        lind = _superoperator(h.matrix().astype(np.complex128), jumps)
        flat = expm_multiply(lind, vec, start=0.0,
                             stop=float(times[-1] - times[0]), num=len(times),
                             endpoint=True)
    else:
        flat = np.empty((len(times), dim * dim), dtype=np.complex128)
        flat[0] = vec
        lind = None
        for k in range(len(times) - 1):
            t0, t1 = float(times[k]), float(times[k + 1])
            n_sub = max(1, math.ceil((t1 - t0) / cfg.dt_max)) if not h.is_constant else 1
            dt = (t1 - t0) / n_sub
            for s in range(n_sub):
                tm = t0 + (s + 0.5) * dt
                if lind is None or not h.is_constant:
                    lind = _superoperator(h.matrix(tm).astype(np.complex128), jumps)
                vec = expm_multiply(dt * lind, vec)
            flat[k + 1] = vec

    mats = flat.reshape(len(times), dim, dim)
    _check_norm_drift(np.real(np.einsum("tii->t", mats)), cfg, "density trace")
    return DensitySeries(basis, times, mats)


def _jump_channels(basis: SubspaceBasis, noise: NoiseSpec):
    """(rates, kind, site) per channel plus the occupation table."""
    occ = basis.occupations()
    channels = []
    if noise.gamma > 0.0:
        channels.extend(("dephase", i, noise.gamma) for i in range(basis.n_sites))
    if noise.kappa > 0.0:
        channels.extend(("decay", i, noise.kappa) for i in range(basis.n_sites))
    return channels, occ


def _apply_jump(psi: np.ndarray, kind: str, site: int, basis: SubspaceBasis,
                occ: np.ndarray, lookup: np.ndarray) -> np.ndarray:
    mask = occ[:, site] == 1.0
    if kind == "dephase":
        out = np.where(mask, psi, 0.0)
    else:
        out = np.zeros_like(psi)
        src = np.nonzero(mask)[0]
        dst = lookup[basis.states[src] ^ (1 << site)]
        out[dst] = psi[src]
    norm = np.linalg.norm(out)
    if norm == 0.0:
        raise StiffnessError("jump annihilated the state")
    return out / norm


def evolve_trajectories(hamiltonian, noise: NoiseSpec, psi0: QuantumState,
                        cfg: EvolutionConfig,
                        sample_times: np.ndarray | None = None) -> TrajectoryResult:
    """Monte-Carlo unraveling of the master equation (norm-threshold jumps).

    The no-jump generator H - i/2 (gamma + kappa) N is constant whenever the
    Hamiltonian is, so the whole ensemble is advanced per sample step with a
    single matrix product.  For basis dim <= propagator_cap the step
    propagator and its dyadic submultiples are precomputed densely and jump
    times are bisected to dt / 2^bisection_levels; larger problems use
    batched sparse Krylov steps with jumps resolved at step boundaries
    (first-order in rate * dt).  Deterministic for fixed (seed,
    trajectory_count), independent of batch ordering.
    """
    h = _Handle(hamiltonian)
    if not h.is_constant:
        raise NotImplementedError("trajectory engine requires a constant generator")
    basis = psi0.basis
    times = cfg.sample_times() if sample_times is None else np.asarray(sample_times)
    if not _is_uniform(times):
        raise ValueError("trajectory sampling requires a uniform grid")
    dt = float(times[1] - times[0])
    counts = basis.excitation_counts()
    total_rate = noise.gamma + noise.kappa
    centered, _ = _centered(h.matrix())
    # the dropped shift is a global phase; populations and norms are unchanged
    h_nj = (centered - 0.5j * total_rate * sp.diags(counts)).tocsr()

    levels = cfg.bisection_levels
    dense = basis.dimension <= cfg.propagator_cap
    if dense:
        dense_h = h_nj.toarray()
        # one exponential at the finest subdivision, the rest by squaring
        props = [scipy.linalg.expm(-1j * dense_h * (dt / 2**levels))]
        for _ in range(levels):
            props.append(props[-1] @ props[-1])
        props.reverse()
    else:
        expected = float(counts @ psi0.populations())
        if total_rate * dt * max(expected, 1.0) > 0.25:
            warnings.warn(
                "jump probability per step exceeds 0.25; boundary-resolved "
                "jumps are first order in rate * dt, consider more samples",
                stacklevel=2)

    channels, occ = _jump_channels(basis, noise)
    lookup = np.full(2**basis.n_sites, -1, dtype=np.int64)
    lookup[basis.states] = np.arange(basis.dimension)

    def draw_jump(psi: np.ndarray, rng) -> tuple[np.ndarray, bool]:
        pops = np.abs(psi) ** 2
        site_pops = occ.T @ pops
        weights = np.array([c[2] * site_pops[c[1]] for c in channels])
        total = weights.sum()
        if total <= 0.0:
            return psi, False
        kind, site, _ = channels[rng.choice(len(channels), p=weights / total)]
        return _apply_jump(psi, kind, site, basis, occ, lookup), True

    def bisect_column(psi: np.ndarray, threshold: float, rng):
        """Dense route: advance one full step, resolving jumps dyadically."""
        jumps = 0
        remaining = 1 << levels
        while remaining > 0:
            level = levels - (remaining.bit_length() - 1)
            cand = props[level] @ psi
            if np.vdot(cand, cand).real >= threshold:
                psi = cand
                remaining -= 1 << (levels - level)
                continue
            sub = levels - level
            while sub > 0:
                sub -= 1
                level += 1
                cand = props[level] @ psi
                if np.vdot(cand, cand).real >= threshold:
                    psi = cand
                    remaining -= 1 << sub
            psi, jumped = draw_jump(psi, rng)
            jumps += int(jumped)
            threshold = rng.random()
            remaining -= 1  # finest piece absorbs the jump instant
        return psi, threshold, jumps

    n_traj = cfg.trajectory_count
    seeds = np.random.SeedSequence(cfg.seed).spawn(n_traj)
    rngs = [np.random.default_rng(s) for s in seeds]
    dim = basis.dimension
    cols = np.repeat(psi0.amplitudes.astype(np.complex128)[:, None], n_traj, axis=1)
    thresholds = np.array([rng.random() for rng in rngs])
    jump_totals = np.zeros(n_traj, dtype=int)
    pop_sum = np.zeros((len(times), dim))
    pop_sq = np.zeros((len(times), dim))

    snap = np.abs(cols) ** 2
    pop_sum[0] = snap.sum(axis=1)
    pop_sq[0] = (snap**2).sum(axis=1)
    for k in range(len(times) - 1):
        if dense:
            advanced = props[0] @ cols
        else:
            advanced = expm_multiply(-1j * dt * h_nj, cols)
        norms2 = np.einsum("dm,dm->m", advanced.conj(), advanced).real
        flagged = np.nonzero(norms2 < thresholds)[0]
        for m in flagged:
            if dense:
                psi, thr, jumps = bisect_column(cols[:, m], thresholds[m], rngs[m])
            else:
                psi, jumped = draw_jump(advanced[:, m], rngs[m])
                thr, jumps = rngs[m].random(), int(jumped)
            advanced[:, m] = psi
            norms2[m] = np.vdot(psi, psi).real
            thresholds[m] = thr
            jump_totals[m] += jumps
        cols = advanced
        snap = np.abs(cols) ** 2 / norms2
        pop_sum[k + 1] = snap.sum(axis=1)
        pop_sq[k + 1] = (snap**2).sum(axis=1)

    mean = pop_sum / n_traj
    var = np.maximum(pop_sq / n_traj - mean**2, 0.0)
    sem = np.sqrt(var / max(n_traj - 1, 1))
    return TrajectoryResult(basis, times, mean, sem, n_traj, jump_totals)


def transport_window(dressing, gamma: float, t: float = 0.0) -> float:
    """Sector-confinement horizon t_c = min_i Delta_i^2 / (gamma Omega_i^2)."""
    if gamma <= 0.0:
        return math.inf
    omega = dressing.rabi_at(t)
    delta = dressing.detuning_at(t)
    active = omega > 0.0
    if not np.any(active):
        return math.inf
    return float(np.min(delta[active]**2 / (gamma * omega[active]**2)))


@dataclass
class HrsResult:
    times: np.ndarray
    matrices: np.ndarray
    mean_square_displacement: np.ndarray


def hopping_matrix(j_by_distance: np.ndarray, n_sites: int) -> np.ndarray:
    """Symmetric Toeplitz hop matrix from per-distance amplitudes J_d."""
    m = np.zeros((n_sites, n_sites))
    for d, j in enumerate(np.asarray(j_by_distance, dtype=float), start=1):
        if j == 0.0 or d >= n_sites:
            continue
        m += np.diag(np.full(n_sites - d, j), d) + np.diag(np.full(n_sites - d, j), -d)
    return m


def evolve_hrs(j_by_distance, gamma: float, n_sites: int, origin: int,
               t_points, *, rtol: float = 1e-11, atol: float = 1e-13) -> HrsResult:
    """Single-exciton density matrix under hopping plus uniform dephasing.

    d rho/dt = -i [M, rho] - gamma (1 - delta_mn) rho_mn with M the hop
    matrix; the exciton starts localized at `origin`.  Open boundaries.
    """
    times = np.asarray(t_points, dtype=float)
    m = hopping_matrix(j_by_distance, n_sites)
    off = 1.0 - np.eye(n_sites)
    rho0 = np.zeros((n_sites, n_sites), dtype=np.complex128)
    rho0[origin, origin] = 1.0

    def rhs(_t, y):
        rho = y.reshape(n_sites, n_sites)
        drho = -1j * (m @ rho - rho @ m) - gamma * off * rho
        return drho.reshape(-1)

    sol = solve_ivp(rhs, (times[0], times[-1]), rho0.reshape(-1), t_eval=times,
                    method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise StiffnessError(f"dephasing-transport integration failed: {sol.message}")
    mats = sol.y.T.reshape(len(times), n_sites, n_sites)
    sites = np.arange(n_sites) - origin
    msd = np.real(np.einsum("tii,i->t", mats, sites.astype(float)**2))
    return HrsResult(times, mats, msd)


def hrs_msd_closed_form(j_by_distance, gamma: float, t) -> np.ndarray:
    """Infinite-chain mean-square displacement of the dephasing transport law:

        <x^2>(t) = (4 sum_d (d J_d)^2 / gamma^2) (gamma t + e^{-gamma t} - 1)

    with the ballistic limit 2 sum_d (d J_d)^2 t^2 at gamma -> 0.
    """
    t = np.asarray(t, dtype=float)
    weight = sum((d * j)**2 for d, j in enumerate(np.asarray(j_by_distance), start=1))
    if gamma == 0.0:
        out = 2.0 * weight * t**2
    else:
        out = 4.0 * weight / gamma**2 * (gamma * t + np.expm1(-gamma * t))
    return out if out.ndim else float(out)
