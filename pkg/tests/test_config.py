import math

import pytest
import yaml

from rydex.config import (EXPERIMENTS, apply_overrides, config_from_dict,
                          default_config, emit_config, parse_config)
from rydex.errors import ConfigError
from rydex.lattice import mhz


class TestDefaults:
    def test_every_experiment_resolves(self):
        for name in EXPERIMENTS:
            cfg = default_config(name)
            assert cfg.experiment == name
            assert cfg.out_dir == "runs"
            assert cfg.formats == ("csv", "json")
            assert not cfg.plot
            assert all(path.startswith(name + ".") for path in cfg.defaulted)

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError):
            default_config("melt")

    def test_defaulted_shrinks_when_keys_given(self):
        base = default_config("pump")
        given = config_from_dict({"experiment": "pump",
                                  "pump": {"n_sites": 15}})
        assert len(given.defaulted) == len(base.defaulted) - 1
        assert "pump.n_sites" not in given.defaulted
        assert given.driver.n_sites == 15


class TestUnits:
    def test_frequency_suffix_converts(self):
        cfg = config_from_dict({"experiment": "hrs",
                                "hrs": {"delta_mhz": 40.0}})
        assert cfg.driver.delta == pytest.approx(mhz(40.0), rel=1e-15)

    def test_bare_dimensionful_key_is_rejected_with_hint(self):
        with pytest.raises(ConfigError, match="delta_mhz"):
            config_from_dict({"experiment": "hrs", "hrs": {"delta": 40.0}})

    def test_rate_time_length_suffixes(self):
        cfg = config_from_dict({"experiment": "hrs", "hrs": {
            "law_gamma_per_us": 0.5, "exact_t_final_us": 2.0,
            "spacing_um": 5.0}})
        assert cfg.driver.law_gamma == 0.5
        assert cfg.driver.exact_t_final == 2.0
        assert cfg.driver.spacing == 5.0

    def test_dimensionless_keys_stay_bare(self):
        cfg = config_from_dict({"experiment": "pump",
                                "pump": {"v_over_delta": 2.5}})
        assert cfg.driver.v_over_delta == 2.5


class TestValidation:
    def test_unknown_key_names_its_path(self):
        with pytest.raises(ConfigError, match=r"pump\.wavelength"):
            config_from_dict({"experiment": "pump",
                              "pump": {"wavelength": 1.0}})

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError):
            config_from_dict({"experiment": "pump", "pump": {},
                              "recipe": "x"})

    def test_missing_experiment_key(self):
        with pytest.raises(ConfigError):
            config_from_dict({"pump": {}})

    def test_bad_formats(self):
        with pytest.raises(ConfigError, match="formats"):
            config_from_dict({"experiment": "validate",
                              "formats": ["csv", "hdf5"]})

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "absent.yaml")

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("experiment: [unclosed\n")
        with pytest.raises(ConfigError, match="YAML"):
            parse_config(path)


class TestRoundTrip:
    @pytest.mark.parametrize("name", sorted(EXPERIMENTS))
    def test_emit_parse_identity(self, name, tmp_path):
        cfg = default_config(name)
        text = emit_config(cfg)
        path = tmp_path / f"{name}.yaml"
        path.write_text(text)
        again = parse_config(path)
        assert emit_config(again) == text
        assert again.defaulted == ()

    def test_document_reflects_overrides(self):
        cfg = default_config("hrs")
        cfg = apply_overrides(cfg, seed=99, out="elsewhere")
        assert cfg.driver.seed == 99
        assert cfg.out_dir == "elsewhere"
        doc = yaml.safe_load(emit_config(cfg))
        assert doc["hrs"]["seed"] == 99
        assert doc["out"] == "elsewhere"


class TestEnsembleOverride:
    def test_transfer_sets_all_member_counts(self):
        cfg = apply_overrides(default_config("transfer"), ensemble=12)
        assert cfg.driver.effective_members == 12
        assert cfg.driver.exact_members == 12
        assert cfg.driver.scan_members == 12

    def test_trajectory_experiments(self):
        for name in ("bound", "hrs"):
            cfg = apply_overrides(default_config(name), ensemble=33)
            assert cfg.driver.trajectories == 33

    def test_rejected_elsewhere(self):
        for name in ("pump", "chern", "derive", "validate"):
            with pytest.raises(ConfigError):
                apply_overrides(default_config(name), ensemble=10)


class TestEngineOverride:
    def test_pump_effective_drops_exact(self):
        cfg = apply_overrides(default_config("pump"), engine="effective")
        assert cfg.driver.engines == ("nn", "nnn")

    def test_pump_exact_keeps_all(self):
        cfg = apply_overrides(default_config("pump"), engine="exact")
        assert cfg.driver.engines == ("nn", "nnn", "exact")

    def test_pump_trajectory_rejected(self):
        with pytest.raises(ConfigError):
            apply_overrides(default_config("pump"), engine="trajectory")

    def test_bound_translations(self):
        eff = apply_overrides(default_config("bound"), engine="effective")
        assert eff.driver.fast
        traj = apply_overrides(default_config("bound"), engine="trajectory")
        assert traj.driver.include_exact_dephased

    def test_hrs_translations(self):
        dense = apply_overrides(default_config("hrs"), engine="exact")
        assert dense.driver.method == "dense"
        traj = apply_overrides(default_config("hrs"), engine="trajectory")
        assert traj.driver.method == "trajectory"
        with pytest.raises(ConfigError):
            apply_overrides(default_config("hrs"), engine="effective")

    def test_transfer_rejects_engine(self):
        with pytest.raises(ConfigError):
            apply_overrides(default_config("transfer"), engine="exact")


class TestSeedThreads:
    def test_seed_injection(self):
        cfg = apply_overrides(default_config("bound"), seed=123)
        assert cfg.driver.seed == 123

    def test_threads_only_where_supported(self):
        cfg = apply_overrides(default_config("transfer"), threads=4)
        assert cfg.driver.threads == 4
        with pytest.raises(ConfigError):
            apply_overrides(default_config("validate"), threads=4)

    def test_validate_seed(self):
        cfg = apply_overrides(default_config("validate"), seed=5)
        assert cfg.driver.seed == 5


class TestShippedConfigs:
    @pytest.mark.parametrize("name", sorted(EXPERIMENTS))
    def test_examples_match_defaults(self, name):
        from pathlib import Path

        path = Path(__file__).resolve().parent.parent / "configs"
        cfg = parse_config(path / f"{name}.yaml")
        assert emit_config(cfg) == emit_config(default_config(name))


class TestListCoercion:
    def test_lists_become_tuples(self):
        cfg = config_from_dict({"experiment": "transfer", "transfer": {
            "sigma_scan_um": [0.0, 0.3]}})
        assert cfg.driver.sigma_scan == (0.0, 0.3)

    def test_pump_engine_list(self):
        cfg = config_from_dict({"experiment": "pump",
                                "pump": {"engines": ["nn"]}})
        assert cfg.driver.engines == ("nn",)
