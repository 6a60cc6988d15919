import math

import numpy as np
import pytest
from scipy.linalg import expm

from rydex.basis import ExcitationNumber, Full, build_basis, project_to_sector
from rydex.dynamics import (EvolutionConfig, evolve_lindblad, evolve_unitary,
                            hrs_msd_closed_form)
from rydex.errors import ConfigError, DesignFailureError
from rydex.experiments import (CheckResult, EnsembleStats, ExperimentReport,
                               HrsConfig, TransferConfig,
                               _com_on_distance, _dense_dephased_profiles,
                               _single_exciton_state, _tracked_moments,
                               crossover_fit, design_transfer_couplings,
                               distance_hoppings, run_entanglement_transfer,
                               run_hrs_crossover, single_atom_dephasing_rate)
from rydex.hamiltonian import EffectiveHamiltonian, build_exact
from rydex.lattice import ChainSpec, DressingProfile, NoiseSpec, mhz
from rydex.observables import density_profile
from rydex.topology import exchange_scale


class TestCheckResult:
    def test_directions(self):
        assert CheckResult("a", 0.1, 0.5, "<=").passed
        assert not CheckResult("a", 0.9, 0.5, "<=").passed
        assert CheckResult("a", 0.9, 0.5, ">=").passed
        assert not CheckResult("a", 0.1, 0.5, ">=").passed

    def test_boundary_value_passes(self):
        assert CheckResult("a", 0.5, 0.5, "<=").passed
        assert CheckResult("a", 0.5, 0.5, ">=").passed

    def test_unknown_direction_raises(self):
        with pytest.raises(ValueError):
            CheckResult("a", 0.1, 0.5, "==").passed

    def test_line_format(self):
        line = CheckResult("rate", 0.123456789, 1.0, "<=").line()
        assert line == "[PASS] rate: 0.123457 <= 1"
        assert CheckResult("rate", 2.0, 1.0, "<=").line().startswith("[FAIL]")


class TestExperimentReport:
    def report(self):
        checks = [CheckResult("x", 1.0, 2.0, "<="),
                  CheckResult("y", 3.0, 2.0, ">=")]
        series = {"t": np.array([0.0, 1.0]), "z": np.float64(2.5)}
        ens = {"e": EnsembleStats(mean=np.array([1.0]), std=np.array([0.1]),
                                  count=4, seeds=(7, 8, 9, 10))}
        return ExperimentReport("demo", {"c": complex(1, -2)}, series, ens,
                                checks)

    def test_passed_and_lines(self):
        rep = self.report()
        assert rep.passed
        assert len(rep.check_lines()) == 2
        rep.checks.append(CheckResult("bad", 5.0, 2.0, "<="))
        assert not rep.passed

    def test_to_dict_is_json_plain(self):
        import json

        d = self.report().to_dict()
        json.dumps(d)
        assert d["series"]["t"] == [0.0, 1.0]
        assert d["series"]["z"] == 2.5
        assert d["parameters"]["c"] == [1.0, -2.0]
        assert d["ensembles"]["e"]["count"] == 4
        assert d["checks"][0]["passed"] is True


class TestTransferDesign:
    BASE = 0.19
    MU = mhz(50.0)

    def test_bond_pattern_and_flat_potential(self):
        design = design_transfer_couplings(7, self.BASE, self.MU)
        n = 6
        expect = self.BASE * np.sqrt(np.arange(1, n) * (n - np.arange(1, n)))
        assert design.bond_rates == pytest.approx(tuple(expect), rel=1e-9)
        assert design.residual <= 1e-6
        assert np.max(np.abs(np.array(design.site_potentials) - self.MU)
                      ) <= 1e-6 * self.BASE
        assert design.dressing.rabi[0].at(0.0) == 0.0
        assert design.transfer_time == pytest.approx(
            math.pi / (2 * self.BASE), rel=1e-12)

    def test_designed_chain_transfers_perfectly(self):
        # mirror-symmetric bonds J sqrt(i(n-i)) move an excitation across
        # the chain in exactly pi/2J; checked by direct exponentiation
        design = design_transfer_couplings(6, self.BASE, self.MU)
        n = 5
        h = np.diag(np.array(design.bond_rates), 1)
        h = h + h.T
        u = expm(-1j * h * design.transfer_time)
        assert abs(u[n - 1, 0]) == pytest.approx(1.0, abs=1e-12)

    def test_minimum_size(self):
        with pytest.raises(ValueError):
            design_transfer_couplings(2, self.BASE, self.MU)
        design_transfer_couplings(3, self.BASE, self.MU)

    def test_unattainable_tolerance_raises(self):
        with pytest.raises(DesignFailureError):
            design_transfer_couplings(7, self.BASE, self.MU,
                                      residual_tol=1e-17)

    def test_deterministic(self):
        a = design_transfer_couplings(7, self.BASE, self.MU)
        b = design_transfer_couplings(7, self.BASE, self.MU)
        assert [s.at(0.0) for s in a.dressing.rabi] == [
            s.at(0.0) for s in b.dressing.rabi]
        assert [s.at(0.0) for s in a.dressing.detuning] == [
            s.at(0.0) for s in b.dressing.detuning]


class TestTrackedMoments:
    def delta_profiles(self, sites, n):
        rows = np.zeros((len(sites), n))
        for k, s in enumerate(sites):
            rows[k, s % n] = 1.0
        return rows

    def test_stationary(self):
        prof = self.delta_profiles([4, 4, 4], 12)
        x, x2 = _tracked_moments(prof, 4.0, 12)
        assert x == pytest.approx([0.0, 0.0, 0.0], abs=1e-14)
        assert x2 == pytest.approx([0.0, 0.0, 0.0], abs=1e-14)

    def test_follows_packet_past_half_ring(self):
        # a walker crossing the wrap seam keeps accumulating displacement
        # instead of jumping back by a ring length
        n = 12
        steps = list(range(4, 4 + 18))
        prof = self.delta_profiles(steps, n)
        x, _ = _tracked_moments(prof, 4.0, n)
        assert x == pytest.approx([k / 3.0 for k in range(18)], abs=1e-12)

    def test_spread_at_seam(self):
        # a symmetric pair straddling the seam has cell spread 1/9, not
        # half a ring squared
        n = 12
        prof = np.zeros((1, n))
        prof[0, 11] = 0.5
        prof[0, 0] = 0.5
        x, x2 = _tracked_moments(prof, 11.5, n)
        assert x == pytest.approx([0.0], abs=1e-12)
        assert x2 == pytest.approx([0.25 / 9.0], rel=1e-12)


class TestComOnDistance:
    def test_normalized_and_centered(self):
        g2 = np.zeros((6, 6))
        g2[1, 3] = 2.0
        g2[2, 4] = 6.0
        centers, dist = _com_on_distance(g2, 2)
        assert centers == pytest.approx(np.arange(4) + 1.0)
        assert dist.sum() == pytest.approx(1.0)
        assert dist == pytest.approx([0.0, 0.25, 0.75, 0.0])

    def test_empty_diagonal_raises(self):
        with pytest.raises(ValueError):
            _com_on_distance(np.zeros((5, 5)), 1)


class TestCrossoverFit:
    def test_recovers_crossover_scale(self):
        gamma = 0.8
        ts = np.geomspace(2e-2, 20.0, 60)
        msd = hrs_msd_closed_form([0.6], gamma, ts)
        fit = crossover_fit(ts, msd, gamma)
        assert fit["early_slope"] == pytest.approx(2.0, abs=0.05)
        assert 1.0 < fit["late_slope"] < 1.3
        ratio = gamma * fit["t_cross"]
        assert 0.5 <= ratio <= 2.0

    def test_scale_invariance_in_gamma(self):
        # gamma t_cross depends only on the window definition
        outs = []
        for gamma in (0.2, 0.8, 2.0):
            ts = np.geomspace(2e-2 / gamma, 16.0 / gamma, 80)
            msd = hrs_msd_closed_form([1.0], gamma, ts)
            outs.append(gamma * crossover_fit(ts, msd, gamma)["t_cross"])
        assert outs[0] == pytest.approx(outs[1], rel=1e-3)
        assert outs[1] == pytest.approx(outs[2], rel=1e-3)

    def test_starved_window_raises(self):
        ts = np.linspace(0.1, 20.0, 30)
        msd = hrs_msd_closed_form([0.6], 0.8, ts)
        with pytest.raises(ValueError):
            crossover_fit(ts, msd, 0.8)


class TestDenseDephasedProfiles:
    N = 4
    GAMMA = 0.5

    def system(self):
        chain = ChainSpec.from_interaction_ratio(self.N, 4.4, 3.0, mhz(50.0))
        dress = DressingProfile.homogeneous(self.N, mhz(5.0), mhz(50.0))
        return chain, dress

    def test_matches_dense_lindblad(self):
        chain, dress = self.system()
        times = np.linspace(0.0, 1.0, 6)
        prof, w = _dense_dephased_profiles(chain, dress, self.GAMMA, times,
                                           0.002)
        psi0 = _single_exciton_state(self.N, {self.N // 2: 1.0}, full=True)
        run = evolve_lindblad(build_exact(chain, dress),
                              NoiseSpec(gamma=self.GAMMA), psi0.to_density(),
                              EvolutionConfig(t_final=1.0, n_samples=6))
        basis = psi0.basis
        rows = np.array([basis.position_of(1 << i) for i in range(self.N)])
        pops = run.populations()[:, rows]
        wref = pops.sum(axis=1)
        assert prof == pytest.approx(pops / wref[:, None], abs=2e-6)
        assert w == pytest.approx(wref, abs=2e-6)

    def test_zero_dephasing_is_unitary(self):
        chain, dress = self.system()
        times = np.linspace(0.0, 1.0, 6)
        prof, w = _dense_dephased_profiles(chain, dress, 0.0, times, 0.02)
        psi0 = _single_exciton_state(self.N, {self.N // 2: 1.0}, full=True)
        run = evolve_unitary(build_exact(chain, dress), psi0,
                             EvolutionConfig(t_final=1.0, n_samples=6))
        basis = psi0.basis
        rows = np.array([basis.position_of(1 << i) for i in range(self.N)])
        pops = np.abs(run.states[:, rows]) ** 2
        wref = pops.sum(axis=1)
        assert prof == pytest.approx(pops / wref[:, None], abs=1e-10)

    def test_profiles_normalized(self):
        chain, dress = self.system()
        prof, _ = _dense_dephased_profiles(chain, dress, self.GAMMA,
                                           np.linspace(0.0, 0.5, 4), 0.01)
        assert prof.sum(axis=1) == pytest.approx(np.ones(4), abs=1e-12)


class TestDistanceHoppings:
    def test_matches_exchange_closed_form(self):
        omega, delta = mhz(5.0), mhz(50.0)
        hops = distance_hoppings(omega, delta, 3.0, 4.4, 3)
        v = 3.0 * delta
        for d in range(1, 4):
            assert hops[d - 1] == pytest.approx(
                exchange_scale(omega, delta, v / d**6), rel=1e-9)

    def test_second_neighbour_ratio(self):
        hops = distance_hoppings(mhz(5.0), mhz(50.0), 3.0, 4.4, 2)
        assert hops[1] / hops[0] == pytest.approx(4.0 / 67.0, rel=1e-9)


class TestSingleAtomRate:
    def test_fit_agrees_with_prediction(self):
        out = single_atom_dephasing_rate(mhz(5.0), mhz(50.0), 0.2)
        expect = (mhz(5.0) ** 2 * 0.1) / (mhz(50.0) ** 2 + 0.1**2)
        assert out["rate_predicted"] == pytest.approx(expect, rel=1e-12)
        assert out["relative_error"] <= 0.1


class TestPerturbativeConsistency:
    def discrepancy(self, ratio):
        # site-population mismatch between the exact run (projected onto
        # the single-exciton sector) and the effective sector run
        n = 5
        omega = mhz(5.0)
        delta = ratio * omega
        chain = ChainSpec.from_interaction_ratio(n, 4.4, 3.0, delta)
        dress = DressingProfile.homogeneous(n, omega, delta)
        cfg = EvolutionConfig(t_final=2.0, n_samples=21)

        psi_full = _single_exciton_state(n, {n // 2: 1.0}, full=True)
        exact = evolve_unitary(build_exact(chain, dress), psi_full, cfg)
        psi_sec = _single_exciton_state(n, {n // 2: 1.0})
        h_eff = EffectiveHamiltonian(chain, dress, psi_sec.basis)
        eff = evolve_unitary(h_eff, psi_sec, cfg)

        worst = 0.0
        for k in range(len(cfg.sample_times())):
            refined, _ = project_to_sector(exact.state(k), 1)
            p_exact = density_profile(refined)
            p_eff = density_profile(eff.state(k))
            worst = max(worst, float(np.max(np.abs(p_exact - p_eff))))
        return worst

    def test_discrepancy_shrinks_with_detuning(self):
        d10 = self.discrepancy(10.0)
        d20 = self.discrepancy(20.0)
        assert d20 < d10


SMALL_HRS = dict(law_sites=101, law_samples=41, law_t_final=10.0,
                 crossover_samples=41, exact_sites=7, exact_samples=11,
                 exact_t_final=1.5, factor_sites=5, factor_samples=11)


class TestHrsDriver:
    def test_small_dense_run_passes(self):
        rep = run_hrs_crossover(HrsConfig(**SMALL_HRS))
        names = [c.name for c in rep.checks]
        assert names == ["law_matches_closed_form", "crossover_time_scale",
                         "exact_msd_matches_law", "factorization_pointwise",
                         "sector_weight_decay", "single_atom_rate"]
        assert rep.passed, rep.check_lines()
        assert rep.parameters["exact"]["method"] == "dense"
        assert rep.series["exact_msd"].shape == (11,)
        assert rep.series["exact_sector_weight"][0] == pytest.approx(1.0,
                                                                     abs=1e-9)

    def test_trajectory_method_reports_ensemble(self):
        cfg = HrsConfig(**SMALL_HRS, method="trajectory", trajectories=24)
        rep = run_hrs_crossover(cfg)
        assert "exact_site_populations" in rep.ensembles
        ens = rep.ensembles["exact_site_populations"]
        assert ens.count == 24
        assert rep.parameters["exact"]["trajectories"] == 24

    def test_unknown_method_rejected(self):
        with pytest.raises(ConfigError):
            run_hrs_crossover(HrsConfig(**SMALL_HRS, method="mc"))

    def test_deterministic_rerun(self):
        a = run_hrs_crossover(HrsConfig(**SMALL_HRS))
        b = run_hrs_crossover(HrsConfig(**SMALL_HRS))
        assert np.array_equal(a.series["exact_msd"], b.series["exact_msd"])
        assert np.array_equal(a.series["law_msd"], b.series["law_msd"])
        assert [c.value for c in a.checks] == [c.value for c in b.checks]


class TestTransferDriver:
    def test_micro_run_passes(self):
        cfg = TransferConfig(n_plus_1=4, effective_members=6, exact_members=3,
                             sigma_scan=(0.0, 0.2), scan_members=4,
                             n_samples=41)
        rep = run_entanglement_transfer(cfg)
        assert rep.passed, rep.check_lines()
        t_star = rep.parameters["transfer_time_us"]
        times = rep.series["times"]
        k = int(np.argmin(np.abs(times - t_star)))
        assert times[k] == pytest.approx(t_star, rel=1e-12)
        assert rep.series["nn_fidelity"][k] >= 1.0 - 1e-6
        assert rep.ensembles["effective_fidelity_disorder"].count == 6
