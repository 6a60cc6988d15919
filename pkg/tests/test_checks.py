from rydex.checks import validate_suite


EXPECTED = ["exact_hamiltonian_hermitian", "effective_hamiltonian_hermitian",
            "effective_model_number_conserving", "unitary_norm_conserved",
            "lindblad_trace_conserved", "pair_correlation_normalized",
            "projection_idempotent", "chern_numbers_sum_to_zero",
            "schedule_endpoints"]


class TestValidateSuite:
    def test_all_invariants_hold(self):
        checks = validate_suite(seed=0)
        assert [c.name for c in checks] == EXPECTED
        for check in checks:
            assert check.passed, check.line()

    def test_seed_changes_probes_not_outcomes(self):
        for seed in (1, 17):
            assert all(c.passed for c in validate_suite(seed=seed))

    def test_deterministic(self):
        a = validate_suite(seed=4)
        b = validate_suite(seed=4)
        assert [c.value for c in a] == [c.value for c in b]
