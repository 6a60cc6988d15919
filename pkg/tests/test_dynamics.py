"""Evolution engines against analytic references and cross-method checks."""
import numpy as np
import pytest
import scipy.sparse as sp

from rydex.basis import (DensityOperator, ExcitationNumber, Full, QuantumState,
                         build_basis, sector_block)
from rydex.dynamics import (EvolutionConfig, decay_operators,
                            dephasing_operators, evolve_hrs, evolve_lindblad,
                            evolve_trajectories, evolve_unitary,
                            hopping_matrix, hrs_msd_closed_form,
                            transport_window)
from rydex.errors import DimensionCapError, StiffnessError
from rydex.hamiltonian import build_exact, derive_effective, effective_hamiltonian
from rydex.lattice import ChainSpec, DressingProfile, NoiseSpec, mhz


def hop_pair(j):
    return np.array([[0.0, j], [j, 0.0]])


def small_system(n, omega_mhz=5.0, delta_mhz=50.0, ratio=3.0, periodic=False):
    chain = ChainSpec.from_interaction_ratio(n, spacing=4.4, v_over_delta=ratio,
                                             delta=mhz(delta_mhz),
                                             periodic=periodic)
    dressing = DressingProfile.homogeneous(n, mhz(omega_mhz), mhz(delta_mhz))
    return chain, dressing


class _FrozenHandle:
    """Constant matrix dressed up as a time-dependent generator."""

    is_constant = False

    def __init__(self, mat):
        self._mat = sp.csr_matrix(mat)

    def matrix(self, t):
        return self._mat


class _CommutingDrive:
    """H(t) = cos(pi t) J sigma_x; exactly solvable since [H(t), H(t')] = 0."""

    is_constant = False

    def __init__(self, j):
        self.j = j

    def matrix(self, t):
        return sp.csr_matrix(np.cos(np.pi * t) * hop_pair(self.j))


class TestUnitary:
    def test_two_site_oscillation(self):
        j = mhz(0.09375)
        basis = build_basis(2, ExcitationNumber(1))
        psi0 = QuantumState.basis_state(basis, 0b01)
        cfg = EvolutionConfig(t_final=np.pi / (2 * j), n_samples=161)
        series = evolve_unitary(hop_pair(j), psi0, cfg)
        pops = series.populations()
        np.testing.assert_allclose(pops[:, 1], np.sin(j * series.times) ** 2,
                                   atol=1e-9)
        quarter = np.argmin(np.abs(series.times - np.pi / (4 * j)))
        np.testing.assert_allclose(pops[quarter], [0.5, 0.5], atol=1e-3)

    def test_methods_agree(self):
        rng = np.random.default_rng(2)
        mat = rng.normal(size=(6, 6))
        mat = mat + mat.T
        basis = build_basis(6, ExcitationNumber(1))
        psi0 = QuantumState(basis, rng.normal(size=6), normalize=True)
        results = {}
        for method in ("krylov", "dense-expm", "adaptive-rk"):
            cfg = EvolutionConfig(t_final=2.0, n_samples=21, method=method)
            results[method] = evolve_unitary(mat, psi0, cfg).states
        np.testing.assert_allclose(results["krylov"], results["dense-expm"],
                                   atol=1e-9)
        np.testing.assert_allclose(results["krylov"], results["adaptive-rk"],
                                   atol=1e-7)

    def test_time_dependent_commuting_drive(self):
        j = 2.0
        basis = build_basis(2, ExcitationNumber(1))
        psi0 = QuantumState.basis_state(basis, 0b01)
        cfg = EvolutionConfig(t_final=1.5, n_samples=31, dt_max=0.002)
        series = evolve_unitary(_CommutingDrive(j), psi0, cfg)
        theta = j * np.sin(np.pi * series.times) / np.pi
        np.testing.assert_allclose(series.populations()[:, 0],
                                   np.cos(theta) ** 2, atol=5e-6)

    def test_midpoint_is_second_order_on_schedule(self):
        from rydex.hamiltonian import EffectiveHamiltonian
        chain, _ = small_system(3, omega_mhz=5.0, delta_mhz=20.0)
        dressing = DressingProfile.pump(3, mhz(5.0), mhz(20.0), period=8.0)
        basis = build_basis(3, ExcitationNumber(1))
        handle = EffectiveHamiltonian(chain, dressing, basis)
        psi0 = QuantumState.basis_state(basis, 0b100)
        rk = evolve_unitary(handle, psi0,
                            EvolutionConfig(t_final=4.0, n_samples=9,
                                            method="adaptive-rk",
                                            rel_tol=1e-11, abs_tol=1e-13))
        errors = {}
        for dt_max in (0.02, 0.005):
            mid = evolve_unitary(handle, psi0,
                                 EvolutionConfig(t_final=4.0, n_samples=9,
                                                 dt_max=dt_max))
            errors[dt_max] = np.max(np.abs(mid.populations() - rk.populations()))
        assert errors[0.005] < 1e-6
        assert 10.0 < errors[0.02] / errors[0.005] < 22.0

    def test_nonuniform_sample_times(self):
        j = 1.3
        basis = build_basis(2, ExcitationNumber(1))
        psi0 = QuantumState.basis_state(basis, 0b01)
        times = np.array([0.0, 0.13, 0.55, 0.8])
        cfg = EvolutionConfig(t_final=0.8, n_samples=4)
        series = evolve_unitary(hop_pair(j), psi0, cfg, sample_times=times)
        np.testing.assert_allclose(series.populations()[:, 1],
                                   np.sin(j * times) ** 2, atol=1e-10)

    def test_norm_guard_catches_nonhermitian_input(self):
        basis = build_basis(2, ExcitationNumber(1))
        psi0 = QuantumState.basis_state(basis, 0b01)
        bad = np.array([[0.0, 1.0], [0.3, 0.0]])
        with pytest.raises(StiffnessError, match="drifted"):
            evolve_unitary(bad, psi0, EvolutionConfig(t_final=8.0, n_samples=11))

    def test_config_validation(self):
        with pytest.raises(ValueError, match="method"):
            EvolutionConfig(t_final=1.0, method="verlet")
        with pytest.raises(ValueError, match="samples"):
            EvolutionConfig(t_final=1.0, n_samples=1)


class TestLindblad:
    def test_pure_dephasing_closed_form(self):
        delta, gamma = 4.0, 0.7
        basis = build_basis(1, Full())
        h = np.diag([0.0, delta])
        plus = QuantumState(basis, np.array([1.0, 1.0]) / np.sqrt(2))
        cfg = EvolutionConfig(t_final=3.0, n_samples=31)
        series = evolve_lindblad(h, NoiseSpec(gamma=gamma), plus.to_density(), cfg)
        t = series.times
        got = series.matrices[:, 0, 1]
        expect = 0.5 * np.exp(1j * delta * t) * np.exp(-gamma * t / 2)
        np.testing.assert_allclose(got, expect, atol=1e-10)
        np.testing.assert_allclose(series.populations(),
                                   np.full((31, 2), 0.5), atol=1e-10)

    def test_pure_decay_closed_form(self):
        kappa = 0.9
        basis = build_basis(1, Full())
        plus = QuantumState(basis, np.array([1.0, 1.0]) / np.sqrt(2))
        cfg = EvolutionConfig(t_final=2.5, n_samples=26)
        series = evolve_lindblad(np.zeros((2, 2)), NoiseSpec(kappa=kappa),
                                 plus.to_density(), cfg)
        t = series.times
        np.testing.assert_allclose(series.matrices[:, 1, 1],
                                   0.5 * np.exp(-kappa * t), atol=1e-10)
        np.testing.assert_allclose(series.matrices[:, 0, 1],
                                   0.5 * np.exp(-kappa * t / 2), atol=1e-10)

    def test_driven_dephasing_steady_state_is_maximally_mixed(self):
        omega, delta = mhz(2.0), mhz(6.0)
        gamma = 1.5
        chain, _ = small_system(1)
        dressing = DressingProfile.homogeneous(1, omega, delta)
        h = build_exact(chain, dressing)
        # horizon from the slowest Bloch relaxation mode, not from 1/gamma
        bloch = np.array([[-gamma / 2, delta, 0.0],
                          [-delta, -gamma / 2, -omega],
                          [0.0, omega, 0.0]])
        rate = -np.max(np.linalg.eigvals(bloch).real)
        basis = build_basis(1, Full())
        rho0 = QuantumState.basis_state(basis, 0b1).to_density()
        cfg = EvolutionConfig(t_final=18.0 / rate, n_samples=301)
        series = evolve_lindblad(h, NoiseSpec(gamma=gamma), rho0, cfg)
        np.testing.assert_allclose(series.matrices[-1], np.eye(2) / 2, atol=1e-6)

    def test_krylov_and_stepped_paths_agree(self):
        chain, dressing = small_system(6, omega_mhz=2.0, delta_mhz=20.0)
        h = build_exact(chain, dressing)
        basis = build_basis(6, Full())
        rho0 = QuantumState.basis_state(basis, 0b000100).to_density()
        noise = NoiseSpec(gamma=0.4, kappa=0.2)
        cfg = EvolutionConfig(t_final=0.5, n_samples=6, dt_max=0.01)
        direct = evolve_lindblad(h.matrix(), noise, rho0, cfg)
        stepped = evolve_lindblad(_FrozenHandle(h.matrix()), noise, rho0, cfg)
        np.testing.assert_allclose(direct.matrices, stepped.matrices, atol=1e-8)

    def test_explicit_jump_list_matches_noise_spec(self):
        basis = build_basis(2, Full())
        chain, dressing = small_system(2)
        h = build_exact(chain, dressing)
        rho0 = QuantumState.basis_state(basis, 0b01).to_density()
        cfg = EvolutionConfig(t_final=1.0, n_samples=11)
        via_spec = evolve_lindblad(h, NoiseSpec(gamma=0.8), rho0, cfg)
        via_list = evolve_lindblad(h, dephasing_operators(basis, 0.8), rho0, cfg)
        np.testing.assert_allclose(via_spec.matrices, via_list.matrices,
                                   atol=1e-13)

    def test_dimension_cap(self):
        basis = build_basis(3, Full())
        rho0 = QuantumState.basis_state(basis, 0b001).to_density()
        cfg = EvolutionConfig(t_final=1.0, dense_cap=4)
        with pytest.raises(DimensionCapError, match="trajectories"):
            evolve_lindblad(np.zeros((8, 8)), NoiseSpec(gamma=0.1), rho0, cfg)

    def test_decay_requires_full_basis(self):
        basis = build_basis(3, ExcitationNumber(1))
        with pytest.raises(ValueError, match="full basis"):
            decay_operators(basis, 0.5)


class TestDecayFactorization:
    def test_decayed_block_equals_rescaled_dephasing_block(self):
        # exciton-number-conserving generator: the decay channel multiplies
        # the single-exciton block by exp(-kappa t) exactly
        omega, delta_mhz = 1.0, 10.0
        chain, dressing = small_system(5, omega_mhz=omega, delta_mhz=delta_mhz,
                                       periodic=True)
        model = derive_effective(chain, dressing)
        basis = build_basis(5, Full())
        h = effective_hamiltonian(model, basis)
        rho0 = QuantumState.basis_state(basis, 0b00100).to_density()
        gamma, kappa = 0.1, 0.05
        cfg = EvolutionConfig(t_final=6.0, n_samples=13)
        with_decay = evolve_lindblad(h, NoiseSpec(gamma=gamma, kappa=kappa),
                                     rho0, cfg)
        dephasing_only = evolve_lindblad(h, NoiseSpec(gamma=gamma), rho0, cfg)
        for k in (4, 8, 12):
            t = with_decay.times[k]
            full = DensityOperator(basis, with_decay.matrices[k], check=False)
            ref = DensityOperator(basis, dephasing_only.matrices[k], check=False)
            block_full, p_full = sector_block(full, 1, renormalize=True)
            block_ref, p_ref = sector_block(ref, 1, renormalize=True)
            np.testing.assert_allclose(block_full.matrix, block_ref.matrix,
                                       atol=1e-6)
            assert p_full / p_ref == pytest.approx(np.exp(-kappa * t), abs=1e-8)


class TestTrajectories:
    def test_no_noise_reduces_to_unitary(self):
        chain, dressing = small_system(3)
        h = build_exact(chain, dressing)
        basis = build_basis(3, Full())
        psi0 = QuantumState.basis_state(basis, 0b010)
        cfg = EvolutionConfig(t_final=1.0, n_samples=11, trajectory_count=3,
                              seed=1)
        traj = evolve_trajectories(h, NoiseSpec(), psi0, cfg)
        unitary = evolve_unitary(h, psi0, cfg)
        np.testing.assert_allclose(traj.populations, unitary.populations(),
                                   atol=1e-10)
        assert traj.jump_counts.sum() == 0

    def test_matches_lindblad(self):
        chain, dressing = small_system(3)
        h = build_exact(chain, dressing)
        basis = build_basis(3, Full())
        psi0 = QuantumState.basis_state(basis, 0b010)
        noise = NoiseSpec(gamma=0.3, kappa=0.2)
        cfg = EvolutionConfig(t_final=2.0, n_samples=21, trajectory_count=400,
                              seed=7)
        traj = evolve_trajectories(h, noise, psi0, cfg)
        exact = evolve_lindblad(h, noise, psi0.to_density(), cfg)
        diff = np.abs(traj.populations - exact.populations())
        assert np.max(diff) < 0.025
        assert np.mean(diff) < 0.006

    def test_deterministic_and_seed_sensitive(self):
        chain, dressing = small_system(2)
        h = build_exact(chain, dressing)
        basis = build_basis(2, Full())
        psi0 = QuantumState.basis_state(basis, 0b01)
        noise = NoiseSpec(gamma=0.5)
        cfg = EvolutionConfig(t_final=1.0, n_samples=6, trajectory_count=20,
                              seed=3)
        a = evolve_trajectories(h, noise, psi0, cfg)
        b = evolve_trajectories(h, noise, psi0, cfg)
        assert np.array_equal(a.populations, b.populations)
        import dataclasses
        c = evolve_trajectories(h, noise, psi0,
                                dataclasses.replace(cfg, seed=4))
        assert not np.array_equal(a.populations, c.populations)

    def test_pure_decay_survival_curve(self):
        kappa = 0.5
        basis = build_basis(1, Full())
        psi0 = QuantumState.basis_state(basis, 0b1)
        cfg = EvolutionConfig(t_final=3.0, n_samples=31, trajectory_count=800,
                              seed=11)
        traj = evolve_trajectories(np.zeros((2, 2)), NoiseSpec(kappa=kappa),
                                   psi0, cfg)
        expect = np.exp(-kappa * traj.times)
        diff = np.abs(traj.populations[:, 1] - expect)
        assert np.max(diff) < 0.06
        assert np.mean(diff) < 0.02
        jumped = traj.jump_counts.sum()
        assert abs(jumped - 800 * (1 - np.exp(-kappa * 3.0))) < 5 * np.sqrt(800)

    def test_sparse_route_matches_lindblad(self):
        chain, dressing = small_system(3)
        h = build_exact(chain, dressing)
        basis = build_basis(3, Full())
        psi0 = QuantumState.basis_state(basis, 0b010)
        noise = NoiseSpec(gamma=0.3, kappa=0.2)
        cfg = EvolutionConfig(t_final=2.0, n_samples=41, trajectory_count=400,
                              seed=7, propagator_cap=2)
        traj = evolve_trajectories(h, noise, psi0, cfg)
        exact = evolve_lindblad(h, noise, psi0.to_density(),
                                EvolutionConfig(t_final=2.0, n_samples=41))
        diff = np.abs(traj.populations - exact.populations())
        assert np.max(diff) < 0.035
        assert np.mean(diff) < 0.008

    def test_requires_constant_generator(self):
        basis = build_basis(2, ExcitationNumber(1))
        psi0 = QuantumState.basis_state(basis, 0b01)
        with pytest.raises(NotImplementedError):
            evolve_trajectories(_CommutingDrive(1.0), NoiseSpec(gamma=0.1),
                                psi0, EvolutionConfig(t_final=1.0))


class TestTransportWindow:
    def test_scaling(self):
        dressing = DressingProfile.homogeneous(2, 1.0, 10.0)
        assert transport_window(dressing, 2.0) == pytest.approx(50.0)
        assert transport_window(dressing, 0.0) == np.inf

    def test_ignores_undriven_spectator(self):
        dressing = DressingProfile.from_arrays([0.0, 1.0], [10.0, 10.0])
        assert transport_window(dressing, 2.0) == pytest.approx(50.0)

    def test_single_atom_sector_drop_at_window(self):
        # at t_c = Delta^2 / (gamma Omega^2) the excited-state weight has
        # relaxed by (1 - e^{-1/2})/2, about 19.7%, independent of parameters
        expected_drop = 0.5 * (1.0 - np.exp(-0.5))
        for omega_mhz, gamma in ((5.0, mhz(5.0) / 25), (3.0, mhz(3.0) / 60)):
            omega = mhz(omega_mhz)
            delta = 10 * omega
            dressing = DressingProfile.homogeneous(1, omega, delta)
            chain = ChainSpec.regular(1, 4.4, 1.0)
            h = build_exact(chain, dressing)
            t_c = transport_window(dressing, gamma)
            assert t_c == pytest.approx(100.0 / gamma, rel=1e-12)
            basis = build_basis(1, Full())
            rho0 = QuantumState.basis_state(basis, 0b1).to_density()
            cfg = EvolutionConfig(t_final=t_c, n_samples=401)
            series = evolve_lindblad(h, NoiseSpec(gamma=gamma), rho0, cfg)
            drop = 1.0 - float(series.matrices[-1, 1, 1].real)
            assert drop == pytest.approx(expected_drop, abs=5e-3)
            assert drop < 0.20


class TestHrs:
    def test_hopping_matrix_layout(self):
        m = hopping_matrix([1.0, 0.25], 5)
        assert m[0, 1] == 1.0 and m[1, 0] == 1.0
        assert m[0, 2] == 0.25 and m[2, 4] == 0.25
        assert m[0, 3] == 0.0
        assert np.allclose(m, m.T)

    def test_matches_closed_form(self):
        j1, gamma = mhz(0.09375), 0.8
        times = np.linspace(0.0, 2.5, 26)
        result = evolve_hrs([j1], gamma, n_sites=101, origin=50, t_points=times)
        expect = hrs_msd_closed_form([j1], gamma, times)
        rel = np.abs(result.mean_square_displacement[1:] - expect[1:]) / expect[1:]
        assert np.max(rel) < 1e-6

    def test_multi_distance_hops(self):
        js, gamma = [0.5, 0.12], 0.6
        times = np.linspace(0.0, 2.0, 11)
        result = evolve_hrs(js, gamma, n_sites=81, origin=40, t_points=times)
        expect = hrs_msd_closed_form(js, gamma, times)
        rel = np.abs(result.mean_square_displacement[1:] - expect[1:]) / expect[1:]
        assert np.max(rel) < 1e-6

    def test_ballistic_limit(self):
        j1 = 0.4
        times = np.linspace(0.0, 3.0, 7)
        result = evolve_hrs([j1], 0.0, n_sites=61, origin=30, t_points=times)
        expect = 2 * j1**2 * times**2
        np.testing.assert_allclose(result.mean_square_displacement[1:],
                                   expect[1:], rtol=1e-8)

    def test_closed_form_small_gamma_continuity(self):
        t = np.linspace(0.1, 2.0, 5)
        a = hrs_msd_closed_form([0.3], 1e-9, t)
        b = hrs_msd_closed_form([0.3], 0.0, t)
        np.testing.assert_allclose(a, b, rtol=1e-5)

    def test_density_matrices_physical(self):
        result = evolve_hrs([0.5], 0.7, n_sites=21, origin=10,
                            t_points=np.linspace(0, 1.5, 4))
        for rho in result.matrices:
            assert abs(np.trace(rho).real - 1.0) < 1e-9
            assert np.max(np.abs(rho - rho.conj().T)) < 1e-9
