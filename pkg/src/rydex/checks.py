"""Fast structural invariants behind the `validate` subcommand.

Each invariant exercises a representative small system and reports a
CheckResult; the whole suite is deterministic and runs in well under a
minute.
"""
from __future__ import annotations

import math

import numpy as np

from .basis import (DensityOperator, ExcitationNumber, Full, QuantumState,
                    build_basis, sector_block)
from .dynamics import EvolutionConfig, evolve_lindblad, evolve_unitary
from .experiments import CheckResult
from .hamiltonian import EffectiveHamiltonian, build_exact
from .lattice import (ChainSpec, DressingProfile, NoiseSpec, mhz,
                      tanh_phase_ramp)
from .observables import g2_correlation
from .topology import BlochHamiltonian, chern_numbers, pump_schedule


def _sector_projection(rho: DensityOperator, n_excitons: int) -> DensityOperator:
    mask = (rho.basis.excitation_counts() == n_excitons).astype(float)
    projected = rho.matrix * np.outer(mask, mask)
    return DensityOperator(rho.basis, projected, check=False)


def validate_suite(seed: int = 0) -> list[CheckResult]:
    checks: list[CheckResult] = []
    rng = np.random.default_rng(seed)

    n = 6
    chain = ChainSpec.from_interaction_ratio(n, 4.4, 3.0, mhz(30.0))
    dressing = DressingProfile.homogeneous(n, mhz(5.0), mhz(30.0))
    full = build_basis(n, Full())
    pair_basis = build_basis(n, ExcitationNumber(2))

    h_exact = build_exact(chain, dressing).matrix().toarray()
    checks.append(CheckResult(
        "exact_hamiltonian_hermitian",
        float(np.max(np.abs(h_exact - h_exact.conj().T))), 1e-12, "<="))

    h_eff = EffectiveHamiltonian(chain, dressing, full).matrix().toarray()
    checks.append(CheckResult(
        "effective_hamiltonian_hermitian",
        float(np.max(np.abs(h_eff - h_eff.conj().T))), 1e-12, "<="))

    n_op = np.diag(full.excitation_counts().astype(float))
    checks.append(CheckResult(
        "effective_model_number_conserving",
        float(np.max(np.abs(h_eff @ n_op - n_op @ h_eff))), 1e-12, "<="))

    amps = rng.normal(size=pair_basis.dimension) + 1j * rng.normal(
        size=pair_basis.dimension)
    psi = QuantumState(pair_basis, amps, normalize=True)
    ecfg = EvolutionConfig(t_final=1.0, n_samples=11)
    run = evolve_unitary(EffectiveHamiltonian(chain, dressing, pair_basis),
                         psi, ecfg)
    norms = np.linalg.norm(run.states, axis=1)
    checks.append(CheckResult("unitary_norm_conserved",
                              float(np.max(np.abs(norms - 1.0))), 1e-7, "<="))

    lind = evolve_lindblad(EffectiveHamiltonian(chain, dressing, pair_basis),
                           NoiseSpec(gamma=0.3), psi.to_density(), ecfg)
    traces = np.real(np.einsum("tii->t", lind.matrices))
    checks.append(CheckResult("lindblad_trace_conserved",
                              float(np.max(np.abs(traces - 1.0))), 1e-7,
                              "<="))

    g2 = g2_correlation(psi)
    checks.append(CheckResult(
        "pair_correlation_normalized",
        float(abs(np.triu(g2, k=1).sum() - 1.0)), 1e-10, "<="))

    mixed = DensityOperator(full, np.eye(full.dimension) / full.dimension)
    once = _sector_projection(mixed, 1)
    twice = _sector_projection(once, 1)
    block_once, p_once = sector_block(once, 1, renormalize=False,
                                      probability_floor=0.0)
    block_twice, p_twice = sector_block(twice, 1, renormalize=False,
                                        probability_floor=0.0)
    idem = max(float(np.max(np.abs(block_once.matrix - block_twice.matrix))),
               abs(p_once - p_twice))
    checks.append(CheckResult("projection_idempotent", idem, 1e-14, "<="))

    bloch = BlochHamiltonian(mhz(5.0), mhz(20.0), 3 * mhz(20.0))
    total = sum(chern_numbers(bloch, grid=(32, 32)))
    checks.append(CheckResult("chern_numbers_sum_to_zero", float(abs(total)),
                              0.5, "<="))

    period = 27.7
    schedule = pump_schedule(period)
    endpoint = max(abs(schedule.phi(0.0)),
                   abs(schedule.phi(period) - math.pi),
                   abs(tanh_phase_ramp(period / 2.0, period) - math.pi / 2.0))
    checks.append(CheckResult("schedule_endpoints", float(endpoint), 1e-12,
                              "<="))

    return checks
