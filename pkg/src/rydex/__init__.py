"""Exciton transport in dressed Rydberg chains.

Functional core (lattice geometry, spin/boson bases, exact and effective
Hamiltonians, closed and open evolution engines, band topology) plus
reproducible experiment drivers and a batch CLI.
"""

__version__ = "0.1.0"

from .basis import (DensityOperator, Dimer, ExcitationNumber, Full,
                    QuantumState, SubspaceBasis, build_basis,
                    project_to_sector, sector_block, sector_probability)
from .dynamics import (EvolutionConfig, evolve_hrs, evolve_lindblad,
                       evolve_trajectories, evolve_unitary,
                       hrs_msd_closed_form, transport_window)
from .errors import (ConfigError, DegenerateBandError, DesignFailureError,
                     DimensionCapError, RydexError)
from .experiments import (BoundStateConfig, CheckResult, EnsembleStats,
                          ExperimentReport, HrsConfig, PumpConfig,
                          TransferConfig, TransferDesign,
                          design_transfer_couplings,
                          run_bound_state_transport,
                          run_entanglement_transfer, run_hrs_crossover,
                          run_thouless_pump, single_atom_dephasing_rate)
from .hamiltonian import (EffectiveHamiltonian, EffectiveModel, build_exact,
                          derive_effective, effective_hamiltonian)
from .lattice import (ChainSpec, DressingProfile, NoiseSpec, mhz,
                      sample_disorder, tanh_phase_ramp, vdw_interaction)
from .observables import (compare_com_fits, com_distribution, concurrence,
                          density_profile, diagonal_weights,
                          displacement_stats, fit_com_bessel, fit_com_gaussian,
                          g2_correlation, partial_trace_pair,
                          transfer_fidelity)
from .topology import (BlochHamiltonian, RiceMeleCoefficients, band_energies,
                       band_gaps, band_populations, berry_curvature,
                       chern_numbers, coefficients, exchange_scale,
                       pump_initial_state, pump_schedule)

__all__ = [name for name in dir() if not name.startswith("_")]
