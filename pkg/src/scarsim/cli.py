"""Command-line entry point for the experiment workflows.

Subcommands: zpi, loschmidt, cy, rzz-bench, qpt, oracle.  Flags override
values from an optional --config INI file; omitted settings fall back to
the dataclass defaults.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import experiments, noise
from .experiments import ExperimentConfig, Table, config_from_ini, emit
from .model import exact_evolve, fibonacci_projector, neel_bitstring, project
from .observables import loschmidt_echo_state, series_from_values, staggered_magnetization


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, help="INI config file mirroring the experiment settings")
    parser.add_argument("--sites", type=int)
    parser.add_argument("--steps", type=int)
    parser.add_argument("--dt", type=float)
    parser.add_argument("--v", type=float)
    parser.add_argument("--omega", type=float)
    parser.add_argument("--impl", choices=["two-cnot", "scaled-rzx", "rzz"])
    parser.add_argument("--shots", type=int)
    parser.add_argument("--infinite-shots", action="store_true", default=None)
    parser.add_argument("--twirls", type=int)
    parser.add_argument("--zne-factors", type=str, help="comma-separated scale factors, e.g. 1.0,1.5,2.0")
    parser.add_argument("--noise-preset", type=str)
    parser.add_argument("--no-postselect", action="store_true", default=None)
    parser.add_argument("--readout-mode", choices=["off", "tensor", "full"])
    parser.add_argument("--dd", action="store_true", default=None)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--out", type=str)
    parser.add_argument("--format", choices=["csv", "json"])


def _config_from_args(args) -> ExperimentConfig:
    overrides = {
        "sites": args.sites,
        "steps": args.steps,
        "dt": args.dt,
        "v": args.v,
        "omega": args.omega,
        "impl": args.impl,
        "shots": args.shots,
        "infinite_shots": args.infinite_shots,
        "twirls": args.twirls,
        "noise_preset": args.noise_preset,
        "readout_mode": args.readout_mode,
        "dd": args.dd,
        "seed": args.seed,
        "trials": args.trials,
        "out": args.out,
        "format": args.format,
    }
    if args.zne_factors is not None:
        overrides["zne_factors"] = tuple(float(x) for x in args.zne_factors.split(","))
    if args.no_postselect:
        overrides["postselect"] = False
    if getattr(args, "regime", None) is not None:
        overrides["regime"] = args.regime
    if args.config:
        return config_from_ini(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def _report(paths) -> None:
    for p in paths:
        print(f"wrote {p}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="scarsim",
        description="Trotterized spin-chain simulations with noise and error mitigation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_zpi = sub.add_parser("zpi", help="staggered magnetization pipeline")
    _add_common(p_zpi)

    p_lo = sub.add_parser("loschmidt", help="return-probability pipeline")
    _add_common(p_lo)
    p_lo.add_argument("--flips", type=int, choices=[0, 1], default=None,
                      help="emit only the series with this flip tolerance")

    p_cy = sub.add_parser("cy", help="unequal-time correlator pipeline")
    _add_common(p_cy)
    p_cy.add_argument("--regime", choices=["scar", "chaotic"])

    p_bench = sub.add_parser("rzz-bench", help="interaction-gate benchmark table")
    _add_common(p_bench)
    p_bench.add_argument("--points", type=int, default=12)
    p_bench.add_argument("--theta-min", type=float, default=0.2)
    p_bench.add_argument("--theta-max", type=float, default=2.4)
    p_bench.add_argument("--repeats", type=int, default=4)

    p_qpt = sub.add_parser("qpt", help="process tomography of one interaction gate")
    _add_common(p_qpt)
    p_qpt.add_argument("--theta", type=float, default=2.0)
    p_qpt.add_argument("--scale-factors", type=str, default="1,3,5")
    p_qpt.add_argument("--repeats", type=int, default=4)
    p_qpt.add_argument("--realization", choices=["atomic", "two-cnot", "scaled-rzx"],
                       default="atomic")

    p_or = sub.add_parser("oracle", help="dump noiseless reference series")
    _add_common(p_or)
    p_or.add_argument("--which", choices=["exact", "trotter", "projected-trotter"],
                      default="trotter")

    args = parser.parse_args(argv)
    config = _config_from_args(args)

    if args.command == "zpi":
        results = experiments.run_zpi(config)
        _report(emit(results, config))
    elif args.command == "loschmidt":
        results = experiments.run_loschmidt(config)
        if args.flips is not None:
            keep = {k: v for k, v in results.items()
                    if f"_f{args.flips}_" in k or k == "variants"}
            results = keep
        _report(emit(results, config))
    elif args.command == "cy":
        results = experiments.run_cy(config)
        _report(emit(results, config))
    elif args.command == "rzz-bench":
        grid = np.linspace(args.theta_min, args.theta_max, args.points)
        results = experiments.run_rzz_bench(config, thetas=grid, repeats=args.repeats)
        _report(emit(results, config))
    elif args.command == "qpt":
        results = _run_qpt(config, args)
        _report(emit(results, config))
    elif args.command == "oracle":
        results = _run_oracle(config, args.which)
        _report(emit(results, config))
    return 0


def _run_qpt(config: ExperimentConfig, args) -> dict:
    from .qsim import rzz
    from .tomography import fidelity_report, spam_free_error

    factors = tuple(int(x) for x in args.scale_factors.split(","))
    slope = spam_free_error(
        rzz(0, 1, args.theta),
        config.noise_spec(),
        scale_factors=factors,
        repeats=args.repeats,
        shots=config.shots,
        seed=config.seed,
        infinite=config.infinite_shots,
        realization=args.realization,
    )
    print(fidelity_report(slope))
    rows = [
        (int(lam), float(f))
        for lam in sorted(slope.per_lambda)
        for f in slope.per_lambda[lam]
    ]
    fit_rows = [
        ("f0", slope.f0),
        ("epsilon", slope.epsilon),
        ("epsilon_std", slope.epsilon_std),
    ]
    return {
        "qpt_fidelities": Table(columns=["scale", "fidelity"], rows=rows),
        "qpt_fit": Table(columns=["parameter", "value"], rows=fit_rows),
    }


def _run_oracle(config: ExperimentConfig, which: str) -> dict:
    params = config.model_params()
    L = params.L
    if which == "exact":
        states = [exact_evolve(params, n * params.dt) for n in range(config.steps + 1)]
        tag = "exact"
    else:
        ref = experiments.reference_series(params, config.steps, config.impl)
        projected = which == "projected-trotter"
        tag = which.replace("-", "_")
        suffix = "_proj" if projected else ""
        dt_v = params.dt * params.V
        out = {
            f"zpi_density_{tag}": series_from_values(
                np.arange(config.steps + 1), dt_v, ref[f"zpi{suffix}"] / L
            ),
            f"loschmidt_f0_{tag}": series_from_values(
                np.arange(config.steps + 1), dt_v, ref[f"echo0{suffix}"]
            ),
            f"loschmidt_f1_{tag}": series_from_values(
                np.arange(config.steps + 1), dt_v, ref[f"echo1{suffix}"]
            ),
            f"fibonacci_weight_{tag}": series_from_values(
                np.arange(config.steps + 1), dt_v, ref["weight"]
            ),
        }
        return out
    mask = fibonacci_projector(L)
    refbits = neel_bitstring(L)
    zpi, echo, weight = [], [], []
    for psi in states:
        zpi.append(staggered_magnetization(psi) / L)
        echo.append(loschmidt_echo_state(psi, refbits))
        weight.append(project(psi, mask)[1])
    dt_v = params.dt * params.V
    steps = np.arange(config.steps + 1)
    return {
        f"zpi_density_{tag}": series_from_values(steps, dt_v, np.array(zpi)),
        f"loschmidt_f0_{tag}": series_from_values(steps, dt_v, np.array(echo)),
        f"fibonacci_weight_{tag}": series_from_values(steps, dt_v, np.array(weight)),
    }


if __name__ == "__main__":
    sys.exit(main())
