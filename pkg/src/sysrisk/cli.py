"""Command-line experiment runner.

Subcommands: generate (config -> instance file), solve (two-stage solve of
an instance under a risk measure, centralized or distributed),
compare-aggregation (aggregate-first vs evaluate-first), and
compare-multivariate (tail risk vs multivariate measures at a fixed
configuration). Every run writes CSV bodies that are byte-identical across
repeats of the same inputs; the JSON manifest carries the only timestamp.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .adal import run_adal_batch, residual_trace_to_csv
from .experiments import wireless_adal_config
from .risk import RiskSpec
from .two_stage import TwoStageIterationError, solve_two_stage, trace_to_csv
from .wireless import (WirelessConfig, build_instance, generate_instance,
                       instance_from_json, instance_to_json)
from . import experiments, reports


def _parse_alphas(text: str):
    alphas = [float(tok) for tok in text.split(",") if tok.strip()]
    if not alphas or any(not 0.0 < a <= 1.0 for a in alphas):
        raise argparse.ArgumentTypeError(
            "alpha list must contain levels in (0, 1]")
    return alphas


def _write_manifest(out_dir: Path, command: str, payload: dict) -> None:
    manifest = {"command": command, "version": __version__,
                "written_at": time.strftime("%Y-%m-%dT%H:%M:%S")}
    manifest.update(payload)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_instance(path):
    with open(path) as fh:
        config, scenarios = instance_from_json(json.load(fh))
    return config, build_instance(config, scenarios)


def cmd_generate(args) -> int:
    with open(args.config) as fh:
        data = json.load(fh)
    if args.seed is not None:
        data["seed"] = args.seed
    if data.get("seed") is None:
        data["seed"] = int(np.random.SeedSequence().entropy % (2 ** 31))
    config = WirelessConfig.from_json(data)
    print("seed: %d" % config.seed)
    instance, scenarios = generate_instance(config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        json.dump(instance_to_json(config, scenarios), fh)
        fh.write("\n")
    print("instance: %s (%d scenarios)" % (out, len(instance.scenarios)))
    return 0


def _solution_payload(config, result) -> dict:
    return {
        "z": [int(b) for b in result.z],
        "risk_value": result.risk_value,
        "eta": result.eta,
        "iterations": result.iterations,
        "converged": result.converged,
        "scenario_values": [float(v) for v in result.scenario_values],
        "num_robots": config.num_robots,
        "num_candidates": config.num_candidates,
    }


def cmd_solve(args) -> int:
    config, instance = _load_instance(args.instance)
    spec = RiskSpec.parse(args.risk)
    instance = instance.with_risk(spec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    eps = args.eps if args.eps is not None else (
        1e-4 if args.mode == "distributed" else 1e-6)
    kwargs = {}
    if args.mode == "distributed":
        kwargs["adal_config"] = wireless_adal_config(
            instance.scenarios[0].decomposition)
    try:
        result = solve_two_stage(instance, eps_master=eps, mode=args.mode,
                                 **kwargs)
    except TwoStageIterationError as err:
        trace_to_csv(err.trace, out_dir / "trace.csv")
        print("solve failed: %s" % err, file=sys.stderr)
        return 1
    trace_to_csv(result.trace, out_dir / "trace.csv")
    with open(out_dir / "solution.json", "w") as fh:
        json.dump(_solution_payload(config, result), fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    reports.master_trace_figure(result.trace, out_dir / "trace.png")
    if args.mode == "distributed":
        adal_cfg = kwargs["adal_config"]
        final = run_adal_batch([instance.scenarios[0].decomposition],
                               adal_cfg, np.asarray(result.z, dtype=float))[0]
        residual_trace_to_csv(final, out_dir / "residuals.csv")
        reports.residual_trace_figure(final, out_dir / "residuals.png")
    _write_manifest(out_dir, "solve", {
        "instance": str(args.instance), "risk": spec.to_json(),
        "mode": args.mode, "eps_master": eps, "seed": config.seed,
        "config": config.to_json()})
    print("z: %s  risk: %.10g  iterations: %d"
          % ("".join(str(int(b)) for b in result.z), result.risk_value,
             result.iterations))
    return 0 if result.converged else 1


def cmd_compare_aggregation(args) -> int:
    config, instance = _load_instance(args.instance)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = experiments.compare_aggregation(config, instance, args.alpha,
                                             kappa=args.kappa)
    report.save_csv(out_dir / "aggregation.csv")
    report.save_proportions_csv(out_dir / "proportions.csv")
    reports.aggregation_comparison_figure(report,
                                          out_dir / "aggregation.png")
    reports.proportion_histogram_figure(report, out_dir / "proportions.png")
    _write_manifest(out_dir, "compare-aggregation", {
        "instance": str(args.instance), "alphas": args.alpha,
        "kappa": args.kappa, "seed": config.seed,
        "config": config.to_json()})
    for r in report.rows:
        label = r.family if r.alpha is None else "%s a=%g" % (r.family,
                                                              r.alpha)
        print("%s: aggregate %.6g (z=%s)  evaluate %.6g (z=%s)"
              % (label, r.aggregate_value,
                 "".join(str(b) for b in r.aggregate_z), r.evaluate_value,
                 "".join(str(b) for b in r.evaluate_z)))
    return 0


def cmd_compare_multivariate(args) -> int:
    config, instance = _load_instance(args.instance)
    with open(args.solution) as fh:
        z = json.load(fh)["z"]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = experiments.compare_multivariate(config, instance, z,
                                              args.alpha)
    report.save_csv(out_dir / "multivariate.csv")
    reports.multivariate_figure(report, out_dir / "multivariate.png")
    _write_manifest(out_dir, "compare-multivariate", {
        "instance": str(args.instance), "solution": str(args.solution),
        "alphas": args.alpha, "seed": config.seed,
        "config": config.to_json()})
    ordered = True
    for r in report.rows:
        others = [v for v in (r.vmavar, r.mavar) if v is not None]
        if any(r.avar > v + 1e-9 for v in others):
            ordered = False
        print("alpha %.3g: avar %.6g  vmavar %.6g  mavar %s%s"
              % (r.alpha, r.avar, r.vmavar,
                 "n/a" if r.mavar is None else "%.6g" % r.mavar,
                 "  [degenerate]" if r.degenerate else ""))
    if not ordered:
        print("warning: scalarized tail risk is not the smallest value",
              file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sysrisk",
        description="Risk-averse information-exchange experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="sample an instance from a config")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=None)
    gen.set_defaults(func=cmd_generate)

    solve = sub.add_parser("solve", help="run the two-stage solve")
    solve.add_argument("--instance", required=True)
    solve.add_argument("--risk", default="exp",
                       help="risk spec, e.g. exp, avar:0.1, msd:1:0.5, "
                            "mix:0.5:0.1, higher:0.1:2")
    solve.add_argument("--mode", choices=("centralized", "distributed"),
                       default="centralized")
    solve.add_argument("--eps", type=float, default=None)
    solve.add_argument("--out", required=True)
    solve.set_defaults(func=cmd_solve)

    agg = sub.add_parser("compare-aggregation",
                         help="aggregate-first vs evaluate-first")
    agg.add_argument("--instance", required=True)
    agg.add_argument("--alpha", type=_parse_alphas, default=[0.1, 0.2, 0.3])
    agg.add_argument("--kappa", type=float, default=0.5)
    agg.add_argument("--out", required=True)
    agg.set_defaults(func=cmd_compare_aggregation)

    mv = sub.add_parser("compare-multivariate",
                        help="tail risk vs multivariate measures")
    mv.add_argument("--instance", required=True)
    mv.add_argument("--solution", required=True)
    mv.add_argument("--alpha", type=_parse_alphas, default=[0.1, 0.2, 0.3])
    mv.add_argument("--out", required=True)
    mv.set_defaults(func=cmd_compare_multivariate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as err:
        print("error: %s" % err, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
