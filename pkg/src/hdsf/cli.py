"""Command-line entry points.

Commands:
  run          one surrogate trial, printing the configuration and result
  run-full     one full-model trial (mid-mission entry or a whole mission)
  fuzz         falsification campaign with summary / violation log / margins CSV
  conformance  full-vs-surrogate verdict agreement over sampled configurations
  margins      margin-space export for sampled configurations

Exit codes: 0 success / property satisfied, 1 property violated or
agreement below 100%, 2 usage or configuration error, 3 simulation
faults during conformance.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import Configuration, ConfigSpace
from .drone import (ControllerVariant, DroneParams, build_full_system,
                    build_surrogate_system, conformance_check, default_config_space,
                    phi_for, timing_comparison)
from .errors import HdsfError
from .falsify import campaign, generate, run_trial, write_margins_csv
from .margins import compute_margins, decision_index
from .stl import Outcome

_PARAM_FLAGS = {
    "min_deploy_alt": "--min-deploy-alt",
    "max_deploy_alt": "--max-deploy-alt",
    "low_batt_threshold": "--batt-threshold",
    "delta": "--delta",
    "dt": "--dt",
    "horizon": "--horizon",
}


def _add_shared_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--battery", type=float, default=100.0,
                        help="initial battery percentage")
    parser.add_argument("--altitude", type=float, default=70.0,
                        help="initial altitude in meters")
    parser.add_argument("--min-deploy-alt", type=float, default=None,
                        help="minimum allowed deployment altitude (default 60.0)")
    parser.add_argument("--max-deploy-alt", type=float, default=None,
                        help="maximum allowed deployment altitude (default 80.0)")
    parser.add_argument("--batt-threshold", type=float, default=None,
                        help="low battery threshold percent (default 10.0)")
    parser.add_argument("--delta", type=float, default=None,
                        help="allowed deployment delay in seconds (default 2.0)")
    parser.add_argument("--variant", choices=[v.value for v in ControllerVariant],
                        default="buggy", help="controller variant")
    parser.add_argument("--seed", type=int,
                        default=int(os.environ.get("HDSF_SEED", "0")),
                        help="random seed (HDSF_SEED overrides the default)")
    parser.add_argument("--runs", type=int, default=200, help="number of runs")
    parser.add_argument("--out-dir", type=str, default="hdsf-out",
                        help="output directory for campaign artifacts")
    parser.add_argument("--dt", type=float, default=None,
                        help="integration / trace step in seconds (default 0.05)")
    parser.add_argument("--horizon", type=float, default=None,
                        help="simulation horizon in seconds (default 120.0)")
    parser.add_argument("--scenario", type=str, default=None,
                        help="JSON file with scenario parameters")


def _resolve_params(args) -> DroneParams:
    """Defaults, overridden by the scenario file, overridden by explicit flags."""
    values: dict = {}
    if args.scenario:
        with open(args.scenario) as fh:
            raw = json.load(fh)
        for key, value in raw.items():
            if key == "waypoint":
                values[key] = tuple(value)
            elif key == "pid_gains":
                values[key] = tuple(tuple(axis) for axis in value)
            else:
                values[key] = value
    flag_values = {
        "min_deploy_alt": args.min_deploy_alt,
        "max_deploy_alt": args.max_deploy_alt,
        "low_batt_threshold": args.batt_threshold,
        "delta": args.delta,
        "dt": args.dt,
        "horizon": args.horizon,
    }
    for key, value in flag_values.items():
        if value is not None:
            values[key] = value
    return DroneParams(**values)


def _resolve_config(args, params: DroneParams) -> Configuration:
    return Configuration({
        "battery_init": args.battery,
        "altitude_init": args.altitude,
        "min_deploy_alt": params.min_deploy_alt,
        "max_deploy_alt": params.max_deploy_alt,
        "low_batt_threshold": params.low_batt_threshold,
        "delta": params.delta,
    })


def _print_run_report(trace, config: Configuration, verdict) -> None:
    i = decision_index(trace, config["low_batt_threshold"])
    battery = float(trace.signals["battery"][i])
    altitude = float(trace.signals["altitude"][i])
    deployed = bool(trace.signals["deployed_flag"].max() >= 0.5)
    crossed = battery <= config["low_batt_threshold"]

    print("Configuration:")
    print(f"- Min deploy altitude: {config['min_deploy_alt']}m")
    print(f"- Max deploy altitude: {config['max_deploy_alt']}m")
    print(f"- Low battery threshold: {config['low_batt_threshold']}%")
    print("Result:")
    print(f"Battery: {battery}")
    print(f"Altitude: {altitude}m")
    print(f"Parachute: {'DEPLOYED' if deployed else 'NOT DEPLOYED'}")
    if deployed and verdict.outcome is Outcome.SATISFIED:
        status = "DEPLOYED - Critical battery, parachute deployed"
    elif deployed:
        status = "VIOLATED - Parachute deployed outside the allowed delay"
    elif verdict.outcome is Outcome.VIOLATED:
        status = "BLOCKED - Critical battery but altitude out of deployment range"
    elif crossed:
        status = "GROUNDED - Critical battery while not airborne"
    else:
        status = "NOMINAL - Battery above threshold throughout flight"
    print(f"Status: {status}")


def _cmd_run(args) -> int:
    params = _resolve_params(args)
    config = _resolve_config(args, params)
    surrogate = build_surrogate_system(params, ControllerVariant(args.variant))
    verdict, trace = run_trial(surrogate, config, phi_for, params.dt, params.horizon)
    _print_run_report(trace, config, verdict)
    return 0 if verdict.outcome is Outcome.SATISFIED else 1


def _cmd_run_full(args) -> int:
    params = _resolve_params(args)
    config = _resolve_config(args, params)
    system = build_full_system(params, ControllerVariant(args.variant))
    if args.entry == "goto":
        system = system.with_entry("GOTO")
    else:
        # whole mission from the ground: start grounded and trigger takeoff
        config = config.replacing(altitude_init=0.0, mission_start=1.0)
    dt = params.full_model_dt if args.full_dt else params.dt
    verdict, trace = run_trial(system, config, phi_for, dt, params.horizon)
    _print_run_report(trace, config, verdict)
    if trace.events:
        print("Mode transitions:")
        for ev in trace.events:
            print(f"  t={ev.time:9.3f}s  {ev.source} -> {ev.target}  ({ev.guard})")
    return 0 if verdict.outcome is Outcome.SATISFIED else 1


def _cmd_fuzz(args) -> int:
    params = _resolve_params(args)
    surrogate = build_surrogate_system(params, ControllerVariant(args.variant),
                                       rng_seed=args.seed)
    if args.space_file:
        space = ConfigSpace.from_json(Path(args.space_file).read_text())
    else:
        space = surrogate.parameter_space
    summary, violations = campaign(
        surrogate, phi_for, space, args.runs,
        dt=params.dt, horizon=params.horizon, seed=args.seed, out_dir=args.out_dir)
    print(f"Total Runs: {summary.total_runs}")
    print(f"Unique Violations: {summary.unique_violations}")
    print(f"Violation Rate: {100.0 * summary.violation_rate:.1f}%")
    print(f"Artifacts written to {args.out_dir}/ "
          "(summary.json, violations.jsonl, margins.csv, traces/)")
    return 0


def _cmd_conformance(args) -> int:
    params = _resolve_params(args)
    space = default_config_space(params, rng_seed=args.seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=args.seed))
    configs = [generate(space, rng) for _ in range(args.n_configs)]
    report = conformance_check(params, ControllerVariant(args.variant), configs,
                               params.dt, params.horizon)
    for k, pair in enumerate(report.pairs):
        marker = "agree" if pair.agree else "DISAGREE"
        print(f"[{k:4d}] full={pair.full.value:9s} surrogate={pair.surrogate.value:9s} {marker}")
    for config, message in report.faults:
        print(f"fault: {message}")
    agreeing = sum(p.agree for p in report.pairs)
    print(f"Agreement: {agreeing}/{len(report.pairs)} ({100.0 * report.agreement:.1f}%)")
    if report.faults:
        return 3
    return 0 if report.agreement == 1.0 else 1


def _cmd_margins(args) -> int:
    params = _resolve_params(args)
    surrogate = build_surrogate_system(params, ControllerVariant(args.variant),
                                       rng_seed=args.seed)
    space = surrogate.parameter_space
    rows = []
    counts: dict[str, int] = {}
    for trial in range(args.runs):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=args.seed,
                                                           spawn_key=(trial,)))
        config = generate(space, rng)
        verdict, trace = run_trial(surrogate, config, phi_for, params.dt, params.horizon)
        point = compute_margins(trace, config, verdict=verdict.outcome)
        rows.append({
            "trial": trial,
            "battery_margin": point.battery_margin,
            "altitude_margin": point.altitude_margin,
            "in_band": point.in_band,
            "verdict": verdict.outcome.value,
            "quadrant": point.quadrant,
            "config": config,
        })
        key = f"{point.quadrant}/{verdict.outcome.value}"
        counts[key] = counts.get(key, 0) + 1
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_margins_csv(out_dir / "margins.csv", rows, space)
    print(f"Margin rows written to {out_dir / 'margins.csv'}")
    for key in sorted(counts):
        print(f"  {key}: {counts[key]}")
    return 0


def _cmd_timing(args) -> int:
    params = _resolve_params(args)
    space = default_config_space(params, rng_seed=args.seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=args.seed))
    configs = [generate(space, rng) for _ in range(args.n_configs)]
    report = timing_comparison(params, configs, params.dt, params.horizon,
                               ControllerVariant(args.variant))
    print(f"Mean full-model trial:  {1000.0 * report.mean_full_seconds:8.2f} ms "
          f"(dt={params.full_model_dt})")
    print(f"Mean surrogate trial:   {1000.0 * report.mean_surrogate_seconds:8.2f} ms "
          f"(dt={params.dt})")
    print(f"Speedup: {report.speedup:.1f}x")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdsf",
        description="Reduce a hybrid system to a property-specific surrogate "
                    "and falsify its safety property.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="one surrogate trial")
    _add_shared_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_full = sub.add_parser("run-full", help="one full-model trial")
    _add_shared_flags(p_full)
    p_full.add_argument("--entry", choices=["goto", "idle"], default="goto",
                        help="start mid-mission (goto) or fly the whole mission (idle)")
    p_full.add_argument("--full-dt", action="store_true",
                        help="integrate at the full model's fidelity step")
    p_full.set_defaults(func=_cmd_run_full)

    p_fuzz = sub.add_parser("fuzz", help="falsification campaign")
    _add_shared_flags(p_fuzz)
    p_fuzz.add_argument("--space-file", type=str, default=None,
                        help="JSON configuration-space file (bounds/orderings)")
    p_fuzz.set_defaults(func=_cmd_fuzz)

    p_conf = sub.add_parser("conformance", help="full-vs-surrogate verdict agreement")
    _add_shared_flags(p_conf)
    p_conf.add_argument("--n-configs", type=int, default=100,
                        help="number of sampled configurations")
    p_conf.set_defaults(func=_cmd_conformance)

    p_marg = sub.add_parser("margins", help="margin-space export")
    _add_shared_flags(p_marg)
    p_marg.set_defaults(func=_cmd_margins)

    p_time = sub.add_parser("timing", help="full-vs-surrogate wall-clock comparison")
    _add_shared_flags(p_time)
    p_time.add_argument("--n-configs", type=int, default=50,
                        help="number of sampled configurations")
    p_time.set_defaults(func=_cmd_timing)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HdsfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
