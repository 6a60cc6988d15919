"""Batch front door: config in, deterministic data files and plots out.

One subcommand per study plus band-topology, coefficient-dump and
invariant-suite utilities.  The exit status is nonzero exactly when a
declared acceptance check in the produced report fails.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .config import (ChernConfig, DeriveConfig, RunConfig, ValidateConfig,
                     apply_overrides, default_config, parse_config)
from .checks import validate_suite
from .errors import ConfigError, RydexError
from .experiments import (CheckResult, ExperimentReport,
                          run_bound_state_transport, run_entanglement_transfer,
                          run_hrs_crossover, run_thouless_pump)
from .hamiltonian import derive_effective
from .lattice import ChainSpec, DressingProfile
from .output import write_artifacts
from .topology import BlochHamiltonian, band_gaps, chern_numbers

_DRIVERS = {
    "transfer": run_entanglement_transfer,
    "pump": run_thouless_pump,
    "bound": run_bound_state_transport,
    "hrs": run_hrs_crossover,
}


def _chern_report(cfg: ChernConfig) -> ExperimentReport:
    v_nn = cfg.v_over_delta * cfg.delta
    v_nnn = v_nn / 64.0 if cfg.include_nnn else None
    bloch = BlochHamiltonian(cfg.omega, cfg.delta, v_nn, v_nnn=v_nnn)
    numbers = chern_numbers(bloch, grid=(cfg.n_k, cfg.n_phi))
    lower_mid, mid_upper = band_gaps(bloch)
    series = {
        "chern_numbers": np.array(numbers, dtype=float),
        "gap_minima": np.array([lower_mid, mid_upper]),
    }
    checks = [CheckResult("chern_numbers_sum_to_zero",
                          float(abs(sum(numbers))), 0.5, "<=")]
    params = {"omega": cfg.omega, "delta": cfg.delta,
              "v_over_delta": cfg.v_over_delta,
              "include_nnn": cfg.include_nnn,
              "grid": [cfg.n_k, cfg.n_phi]}
    return ExperimentReport("chern", params, series, {}, checks)


def _derive_report(cfg: DeriveConfig) -> ExperimentReport:
    chain = ChainSpec.from_interaction_ratio(cfg.n_sites, cfg.spacing,
                                             cfg.v_over_delta, cfg.delta,
                                             periodic=cfg.periodic)
    dressing = DressingProfile.homogeneous(cfg.n_sites, cfg.omega, cfg.delta)
    model = derive_effective(chain, dressing, cutoff=cfg.cutoff)
    series = {
        "site_potentials": model.mu,
        "exchange_matrix": model.exchange,
        "ising_matrix": model.ising,
        "pair_interaction_matrix": model.exciton_interaction,
        "dimer_onsite": model.dimer_onsite,
        "dimer_exchange": model.dimer_exchange,
    }
    params = {"n_sites": cfg.n_sites, "omega": cfg.omega, "delta": cfg.delta,
              "v_over_delta": cfg.v_over_delta, "spacing_um": cfg.spacing,
              "cutoff": cfg.cutoff, "periodic": cfg.periodic}
    return ExperimentReport("derive", params, series, {}, [])


def _validate_report(cfg: ValidateConfig) -> ExperimentReport:
    checks = validate_suite(seed=cfg.seed)
    return ExperimentReport("validate", {"seed": cfg.seed}, {}, {}, checks)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rydex",
        description="Dressed Rydberg chain simulations: exciton transport, "
                    "pumping, bound states and dephasing crossovers.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (
            ("transfer", "entanglement distribution across a designed chain"),
            ("pump", "adiabatic exciton pump over one phase cycle"),
            ("bound", "two-exciton bound-state transport"),
            ("hrs", "dephasing-driven transport crossover"),
            ("chern", "band Chern numbers and gap minima"),
            ("derive", "dump effective-model coefficients"),
            ("validate", "run the structural invariant suite")):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int, help="base random seed")
        p.add_argument("--ensemble", type=int,
                       help="override the ensemble/trajectory size")
        p.add_argument("--engine",
                       choices=("exact", "effective", "trajectory"),
                       help="narrow the engine selection")
        p.add_argument("--out", help="output directory (default runs)")
        p.add_argument("--threads", type=int,
                       help="worker threads for ensemble members")
        p.add_argument("--plot", dest="plot", action="store_true",
                       default=None, help="render an SVG overview")
        p.add_argument("--no-plot", dest="plot", action="store_false",
                       help="skip plotting even if the config asks for it")
    return parser


def _resolve(args) -> RunConfig:
    cfg = (parse_config(args.config) if args.config
           else default_config(args.command))
    if cfg.experiment != args.command:
        raise ConfigError(
            f"config is for {cfg.experiment!r}, but the {args.command!r} "
            f"subcommand was invoked")
    return apply_overrides(cfg, seed=args.seed, threads=args.threads,
                           ensemble=args.ensemble, engine=args.engine,
                           out=args.out, plot=args.plot)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        if args.command in _DRIVERS:
            report = _DRIVERS[args.command](cfg.driver)
        elif args.command == "chern":
            report = _chern_report(cfg.driver)
        elif args.command == "derive":
            report = _derive_report(cfg.driver)
        else:
            report = _validate_report(cfg.driver)
        paths = write_artifacts(report, cfg.out_dir, version=__version__,
                                formats=cfg.formats, plot=cfg.plot)
    except (ConfigError, RydexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    for line in report.check_lines():
        print(line)
    for path in paths:
        print(f"wrote {path}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
