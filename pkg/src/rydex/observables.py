"""Measurement post-processing: site densities, pair correlations, reduced
two-site states, concurrence, and center-of-mass shape diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.special import jv

from .basis import DensityOperator, QuantumState, SubspaceBasis
from .errors import InvalidPairError


def _populations_of(obj, basis: SubspaceBasis | None):
    if isinstance(obj, QuantumState):
        return obj.populations(), obj.basis
    if isinstance(obj, DensityOperator):
        return obj.populations(), obj.basis
    pops = np.asarray(obj, dtype=float)
    if basis is None:
        raise ValueError("raw population arrays need an explicit basis")
    return pops, basis


def density_profile(obj, basis: SubspaceBasis | None = None) -> np.ndarray:
    """Per-site exciton density <n_i>.

    Accepts a state, a density operator, or raw configuration populations
    (1D, or 2D with one row per time sample).
    """
    pops, basis = _populations_of(obj, basis)
    return pops @ basis.occupations()


def g2_correlation(obj, basis: SubspaceBasis | None = None, *,
                   normalize: bool = False) -> np.ndarray:
    """Density-density correlations <n_i n_j> with the diagonal zeroed.

    The unordered-pair sum (upper triangle) is 1 for any normalized
    two-exciton state.  With normalize=True the matrix is rescaled by its
    maximum entry, the convention used for correlation maps.
    """
    pops, basis = _populations_of(obj, basis)
    occ = basis.occupations()
    g2 = np.einsum("k,ki,kj->ij", pops, occ, occ)
    np.fill_diagonal(g2, 0.0)
    if normalize:
        peak = g2.max()
        if peak <= 1e-15:
            raise ValueError("no pair correlations to normalize")
        g2 = g2 / peak
    return g2


def diagonal_weights(g2: np.ndarray) -> np.ndarray:
    """Relative weight at each pair separation m = |i - j| >= 1.

    Entry [m - 1] is the fraction of the total pair weight carried by pairs
    at distance m.
    """
    n = g2.shape[0]
    total = g2.sum()
    if total <= 1e-15:
        raise ValueError("no pair correlations present")
    weights = np.array([np.trace(g2, offset=m) for m in range(1, n)])
    return 2.0 * weights / total


def partial_trace_pair(obj, pair: tuple[int, int]) -> np.ndarray:
    """Reduced 4x4 density matrix of sites (a, b), all other sites traced out.

    Row index is 2 n_a + n_b.  Accepts pure states and density operators on
    any excitation sector (absent configurations carry zero amplitude).
    """
    a, b = pair
    if a == b:
        raise InvalidPairError("pair must involve two distinct sites")
    if isinstance(obj, QuantumState):
        basis = obj.basis
        amps = obj.amplitudes
        env = basis.states & ~((1 << a) | (1 << b))
        sub = 2 * ((basis.states >> a) & 1) + ((basis.states >> b) & 1)
        rho = np.zeros((4, 4), dtype=np.complex128)
        for e in np.unique(env):
            vec = np.zeros(4, dtype=np.complex128)
            idx = np.nonzero(env == e)[0]
            vec[sub[idx]] = amps[idx]
            rho += np.outer(vec, vec.conj())
        return rho
    if isinstance(obj, DensityOperator):
        basis = obj.basis
        mat = obj.matrix
        env = basis.states & ~((1 << a) | (1 << b))
        sub = 2 * ((basis.states >> a) & 1) + ((basis.states >> b) & 1)
        rho = np.zeros((4, 4), dtype=np.complex128)
        for e in np.unique(env):
            idx = np.nonzero(env == e)[0]
            for k in idx:
                for l in idx:
                    rho[sub[k], sub[l]] += mat[k, l]
        return rho
    raise TypeError("expected a QuantumState or DensityOperator")


_SPIN_FLIP = np.array([[0.0, 0.0, 0.0, -1.0],
                       [0.0, 0.0, 1.0, 0.0],
                       [0.0, 1.0, 0.0, 0.0],
                       [-1.0, 0.0, 0.0, 0.0]])


def concurrence(rho: np.ndarray) -> float:
    """Two-qubit concurrence of a 4x4 density matrix (Wootters form)."""
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (4, 4):
        raise ValueError("concurrence is defined for 4x4 density matrices")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-8:
        raise ValueError("reduced density matrix is not Hermitian")
    if np.trace(rho).real <= 0.0:
        raise ValueError("reduced density matrix has non-positive trace")
    flipped = _SPIN_FLIP @ rho.conj() @ _SPIN_FLIP
    vals = np.linalg.eigvals(rho @ flipped)
    lam = np.sort(np.sqrt(np.clip(vals.real, 0.0, None)))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def transfer_fidelity(state, target: QuantumState) -> float:
    """Overlap of the evolved state with a target: |<t|psi>|^2 or <t|rho|t>."""
    if isinstance(state, QuantumState):
        if state.basis is not target.basis and not np.array_equal(
                state.basis.states, target.basis.states):
            raise ValueError("state and target live on different bases")
        return float(abs(np.vdot(target.amplitudes, state.amplitudes)) ** 2)
    if isinstance(state, DensityOperator):
        t = target.amplitudes
        return float(np.real(np.vdot(t, state.matrix @ t)))
    raise TypeError("expected a QuantumState or DensityOperator")


@dataclass(frozen=True)
class DisplacementStats:
    """First and second displacement moments about a reference site.

    Scalars for a single profile, arrays (one entry per row) for a series.
    """

    mean: float | np.ndarray
    mean_square: float | np.ndarray
    weight: float | np.ndarray


def displacement_stats(profile: np.ndarray, reference: float = 0.0,
                       spacing: float = 1.0) -> DisplacementStats:
    """Moments of a site-density profile (or a (T, N) series of profiles)
    about `reference`, in units of `spacing`.  Each profile is renormalized
    by its own weight, which makes the moments post-selection friendly."""
    profile = np.asarray(profile, dtype=float)
    scalar = profile.ndim == 1
    rows = profile[None, :] if scalar else profile
    weight = rows.sum(axis=1)
    if np.any(weight <= 1e-15):
        raise ValueError("empty density profile")
    x = (np.arange(rows.shape[1]) - reference) * spacing
    mean = (rows @ x) / weight
    mean_sq = (rows @ x**2) / weight
    if scalar:
        return DisplacementStats(float(mean[0]), float(mean_sq[0]), float(weight[0]))
    return DisplacementStats(mean, mean_sq, weight)


def com_distribution(obj, basis: SubspaceBasis | None = None,
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Pair center-of-mass distribution on the half-integer site grid.

    Takes a two-exciton-capable state (or a precomputed pair-correlation
    matrix), sums the pair weight over unordered pairs with (i + j) / 2 = c,
    and normalizes.
    """
    if isinstance(obj, np.ndarray) and obj.ndim == 2 and obj.shape[0] == obj.shape[1]:
        g2 = obj
    else:
        g2 = g2_correlation(obj, basis)
    n = g2.shape[0]
    centers = np.arange(2 * n - 1) / 2.0
    probs = np.zeros_like(centers)
    iu, ju = np.triu_indices(n, k=1)
    np.add.at(probs, iu + ju, g2[iu, ju])
    total = probs.sum()
    if total <= 1e-15:
        raise ValueError("no pair weight to histogram")
    return centers, probs / total


@dataclass(frozen=True)
class ShapeFit:
    """Least-squares fit of a center-of-mass profile to a model shape."""

    model: str
    params: dict
    ssr: float
    curve: np.ndarray


def fit_com_bessel(centers: np.ndarray, probs: np.ndarray,
                   origin: float) -> ShapeFit:
    """Fit A J_{|c - origin|}(z)^2, the coherent two-site interference shape.

    Only the amplitude and the argument z are free; the center is pinned to
    the initial center of mass.
    """
    centers = np.asarray(centers, dtype=float)
    probs = np.asarray(probs, dtype=float)
    order = np.abs(centers - origin)

    def curve(z):
        return jv(order, z) ** 2

    def amplitude(z):
        b = curve(z)
        denom = float((b * b).sum())
        return float((probs * b).sum() / denom) if denom > 0 else 0.0

    def residuals(p):
        return amplitude(abs(p[0])) * curve(abs(p[0])) - probs

    var = float((probs * (centers - origin) ** 2).sum() / probs.sum())
    z0 = max(np.sqrt(2.0 * var), 1e-3)
    best = None
    for scale in (0.5, 1.0, 1.5, 2.0):
        sol = least_squares(residuals, x0=[z0 * scale], method="lm")
        if best is None or sol.cost < best.cost:
            best = sol
    z = abs(float(best.x[0]))
    a = amplitude(z)
    fitted = a * curve(z)
    ssr = float(((fitted - probs) ** 2).sum())
    return ShapeFit("bessel", {"amplitude": a, "argument": z, "origin": origin},
                    ssr, fitted)


def fit_com_gaussian(centers: np.ndarray, probs: np.ndarray) -> ShapeFit:
    """Fit A exp(-(c - m)^2 / 2 s^2), the dephased (diffusive) shape."""
    centers = np.asarray(centers, dtype=float)
    probs = np.asarray(probs, dtype=float)
    total = probs.sum()
    mean = float((centers * probs).sum() / total)
    var = float(((centers - mean) ** 2 * probs).sum() / total)
    if var < 1e-12:
        raise ValueError("distribution has no spread; nothing to fit")

    def residuals(p):
        a, m, s = p
        return a * np.exp(-((centers - m) ** 2) / (2.0 * s**2)) - probs

    x0 = [float(probs.max()), mean, np.sqrt(var)]
    sol = least_squares(residuals, x0=x0, method="lm")
    a, m, s = sol.x
    fitted = a * np.exp(-((centers - m) ** 2) / (2.0 * abs(s) ** 2))
    ssr = float(((fitted - probs) ** 2).sum())
    return ShapeFit("gaussian", {"amplitude": float(a), "mean": float(m),
                                 "sigma": float(abs(s))}, ssr, fitted)


def compare_com_fits(centers: np.ndarray, probs: np.ndarray,
                     origin: float) -> dict:
    """Fit both candidate shapes and report which one wins on summed squared
    residuals.  Returns {"bessel": ShapeFit, "gaussian": ShapeFit,
    "winner": str}."""
    bessel = fit_com_bessel(centers, probs, origin)
    gauss = fit_com_gaussian(centers, probs)
    winner = "bessel" if bessel.ssr < gauss.ssr else "gaussian"
    return {"bessel": bessel, "gaussian": gauss, "winner": winner}
