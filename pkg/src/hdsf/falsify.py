"""Search the reduced parameter space for property-violating configurations.

The campaign loop interleaves fresh constraint-preserving generation
with boundary-seeking mutation of previously seen near-boundary
configurations, runs each candidate on the surrogate, evaluates the
property oracle on the trace, and deduplicates violations by a
quantized signature so only non-equivalent counterexamples are logged.

Every trial draws its randomness from a stream derived from the
campaign seed and the trial index, so a campaign is reproducible
bit-for-bit given (seed, run-count budget).
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .config import Configuration, ConfigSpace
from .errors import SimulationFault, SpaceError, TrialFault
from .hybrid import HybridSystem, Trace, project_trace, simulate, write_trace_jsonl
from .margins import MarginPoint, compute_margins
from .stl import (Atom, Eventually, Globally, Implies, And, Not, Or, Until,
                  Outcome, StlFormula, Verdict, evaluate)

FormulaLike = Union[StlFormula, Callable[[Configuration], StlFormula]]

# A configuration is worth mutating when its run decided this close to a
# boundary (battery in percent points, altitude in meters).
BATTERY_SEEK_WINDOW = 5.0
ALTITUDE_SEEK_WINDOW = 10.0
_BATTERY_SEEK_SIGMA = 0.25
_ALTITUDE_SEEK_SIGMA = 1.0
_MAX_REPAIR_ROUNDS = 100


@dataclass(frozen=True)
class TrialFeedback:
    """Verdict and margins of a completed trial, used to steer mutation."""

    verdict: Outcome
    battery_margin: float
    altitude_margin: float
    in_band: bool


@dataclass
class ViolationRecord:
    trial: int
    config: Configuration
    witness_time: Optional[float]
    signature: str
    trace: Optional[Trace] = None
    trace_ref: Optional[str] = None


@dataclass
class CampaignSummary:
    total_runs: int
    unique_violations: int
    violation_rate: float
    seed: int
    wall_time: float


# ---------------------------------------------------------------------------
# Generation and mutation
# ---------------------------------------------------------------------------

def _repair_orderings(values: dict[str, float], space: ConfigSpace, rng) -> None:
    """Resample the violating member of each ordering pair until all hold."""
    for _ in range(_MAX_REPAIR_ROUNDS):
        stable = True
        for a, b in space.orderings:
            if values[a] < values[b]:
                continue
            stable = False
            lo_b, hi_b = space.bounds[b]
            if values[a] < hi_b:
                values[b] = rng.uniform(np.nextafter(max(lo_b, values[a]), np.inf), hi_b)
            else:
                lo_a, hi_a = space.bounds[a]
                if not lo_a < values[b]:
                    raise SpaceError(
                        f"constraint {a} < {b} cannot be repaired within bounds")
                values[a] = rng.uniform(lo_a, min(hi_a, values[b]))
        if stable:
            return
    raise SpaceError("ordering constraints could not be repaired; space may be "
                     "effectively empty")


def generate(space: ConfigSpace, rng: np.random.Generator) -> Configuration:
    """Draw a configuration uniformly, repairing ordering violations."""
    values = {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in space.bounds.items()}
    _repair_orderings(values, space, rng)
    return Configuration(values)


def _clip(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


def mutate(config: Configuration, space: ConfigSpace,
           feedback: Optional[TrialFeedback], rng: np.random.Generator,
           step_scale: float = 1.0) -> Configuration:
    """Perturb a random subset of parameters, steered toward decision
    boundaries when the feedback margins are small.

    A zero ``step_scale`` is the identity.
    """
    if step_scale == 0.0:
        return config
    values = config.as_dict()
    seeking: set[str] = set()

    if feedback is not None:
        if ("battery_init" in values and "battery_init" in space.bounds
                and abs(feedback.battery_margin) < BATTERY_SEEK_WINDOW):
            seeking.add("battery_init")
            target = values["battery_init"] - feedback.battery_margin
            lo, hi = space.bounds["battery_init"]
            values["battery_init"] = _clip(
                target + rng.normal(0.0, _BATTERY_SEEK_SIGMA * step_scale), lo, hi)
        if ("altitude_init" in values and "altitude_init" in space.bounds
                and abs(feedback.altitude_margin) < ALTITUDE_SEEK_WINDOW):
            seeking.add("altitude_init")
            if feedback.in_band:
                # nudge toward the nearer band edge to probe outside it
                lo_edge = values.get("min_deploy_alt")
                hi_edge = values.get("max_deploy_alt")
                alt = values["altitude_init"]
                if lo_edge is not None and hi_edge is not None:
                    target = lo_edge if alt - lo_edge <= hi_edge - alt else hi_edge
                else:
                    target = alt
            else:
                target = values["altitude_init"] - feedback.altitude_margin
            lo, hi = space.bounds["altitude_init"]
            values["altitude_init"] = _clip(
                target + rng.normal(0.0, _ALTITUDE_SEEK_SIGMA * step_scale), lo, hi)

    for name, (lo, hi) in space.bounds.items():
        if name in seeking or name not in values:
            continue
        if rng.random() < 0.5:
            sigma = 0.05 * (hi - lo) * step_scale
            if sigma > 0.0:
                values[name] = _clip(values[name] + rng.normal(0.0, sigma), lo, hi)

    _repair_orderings(values, space, rng)
    return Configuration(values)


# ---------------------------------------------------------------------------
# Trial execution
# ---------------------------------------------------------------------------

def formula_horizon(formula: StlFormula) -> float:
    """Worst-case look-ahead (seconds) the formula needs beyond a sample."""
    if isinstance(formula, Atom):
        return 0.0
    if isinstance(formula, Not):
        return formula_horizon(formula.child)
    if isinstance(formula, (And, Or, Implies)):
        return max(formula_horizon(formula.left), formula_horizon(formula.right))
    if isinstance(formula, Globally):
        inner = formula_horizon(formula.child)
        return inner if formula.interval is None else formula.interval[1] + inner
    if isinstance(formula, Eventually):
        return formula.interval[1] + formula_horizon(formula.child)
    if isinstance(formula, Until):
        return formula.interval[1] + max(formula_horizon(formula.left),
                                         formula_horizon(formula.right))
    raise TypeError(f"not a formula node: {formula!r}")


def run_trial(surrogate, config: Configuration, formula: FormulaLike,
              dt: float, horizon: float, extend_on_truncation: bool = True,
              project_to: Optional[list[str]] = None) -> tuple[Verdict, Trace]:
    """Simulate one configuration and evaluate the property on its trace.

    If the verdict is pessimistically Violated only because an obligation
    window ran past the end of the trace, the run is re-simulated once
    with the horizon extended by the formula's look-ahead, then judged
    pessimistically.

    ``formula`` may be a fixed formula or a callable building one from the
    configuration (for properties parameterized by sampled thresholds).
    With ``project_to``, the trace is projected to those signals before
    evaluation and the projected trace is returned.
    """
    system: HybridSystem = getattr(surrogate, "system", surrogate)
    phi = formula(config) if callable(formula) else formula

    def one_run(h: float) -> tuple[Verdict, Trace]:
        tr = simulate(system, None, config, dt, h)
        if project_to is not None:
            tr = project_trace(tr, project_to)
        return evaluate(phi, tr), tr

    try:
        verdict, trace = one_run(horizon)
        if (verdict.violated and verdict.window_truncated and extend_on_truncation
                and not trace.settled):
            verdict, trace = one_run(horizon + formula_horizon(phi) + 10.0 * dt)
    except SimulationFault as exc:
        raise TrialFault(exc, config) from exc
    return verdict, trace


# ---------------------------------------------------------------------------
# Deduplication
# ---------------------------------------------------------------------------

def _quantize(value: float) -> int:
    # fixed grid of one unit per parameter, half-up
    return int(math.floor(value + 0.5))


def violation_signature(config: Configuration, margins: MarginPoint) -> str:
    """Dedup key: altitude side of the band plus the quantized configuration."""
    if margins.in_band:
        side = "in_band"
    else:
        side = "above" if margins.altitude_margin > 0 else "below"
    quantized = ";".join(f"{k}={_quantize(v)}" for k, v in sorted(config.items()))
    return f"{side}|{quantized}"


def dedup(record: ViolationRecord, seen: set[str]) -> bool:
    """True iff the record's signature is new; new signatures are recorded."""
    if record.signature in seen:
        return False
    seen.add(record.signature)
    return True


# ---------------------------------------------------------------------------
# Campaign
# ---------------------------------------------------------------------------

def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial,)))


def campaign(surrogate, formula: FormulaLike, space: ConfigSpace,
             budget: Optional[int], *, dt: float, horizon: float,
             seed: Optional[int] = None, out_dir=None,
             wall_clock_seconds: Optional[float] = None,
             max_fault_fraction: float = 0.1,
             mutation_fraction: float = 0.5) -> tuple[CampaignSummary, list[ViolationRecord]]:
    """Run a falsification campaign.

    ``budget`` is a run count (the deterministic mode); pass None with
    ``wall_clock_seconds`` for exploratory wall-time campaigns, which are
    documented as nondeterministic.  With ``out_dir`` set, writes
    summary.json, violations.jsonl, margins.csv, and one trace file per
    unique violation.  Aborts when more than ``max_fault_fraction`` of
    trials fault.
    """
    if budget is None and wall_clock_seconds is None:
        raise SpaceError("campaign needs a run-count or wall-clock budget")
    if budget is not None and budget < 0:
        raise SpaceError(f"budget must be nonnegative, got {budget}")
    campaign_seed = int(seed if seed is not None else space.rng_seed)
    started = time.perf_counter()

    violations: list[ViolationRecord] = []
    seen: set[str] = set()
    pool: list[tuple[Configuration, TrialFeedback]] = []
    rows: list[dict] = []
    faults: list[tuple[int, str]] = []

    trial = 0
    while True:
        if budget is not None and trial >= budget:
            break
        if budget is None and time.perf_counter() - started >= wall_clock_seconds:
            break
        rng = _trial_rng(campaign_seed, trial)
        if pool and rng.random() < mutation_fraction:
            base_config, feedback = pool[int(rng.integers(len(pool)))]
            config = mutate(base_config, space, feedback, rng)
        else:
            config = generate(space, rng)

        try:
            verdict, trace = run_trial(surrogate, config, formula, dt, horizon)
        except TrialFault as exc:
            faults.append((trial, str(exc)))
            completed = trial + 1
            if completed >= 10 and len(faults) > max_fault_fraction * completed:
                raise SpaceError(
                    f"campaign aborted: {len(faults)}/{completed} trials faulted; "
                    f"first fault: {faults[0][1]}") from exc
            trial += 1
            continue

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
        feedback = TrialFeedback(verdict.outcome, point.battery_margin,
                                 point.altitude_margin, point.in_band)
        if (abs(point.battery_margin) <= BATTERY_SEEK_WINDOW
                or (not point.in_band and abs(point.altitude_margin) <= ALTITUDE_SEEK_WINDOW)):
            pool.append((config, feedback))

        if verdict.violated:
            record = ViolationRecord(
                trial=trial,
                config=config,
                witness_time=verdict.witness_time,
                signature=violation_signature(config, point),
                trace=trace,
            )
            if dedup(record, seen):
                violations.append(record)
        trial += 1

    total = trial
    summary = CampaignSummary(
        total_runs=total,
        unique_violations=len(violations),
        violation_rate=(len(violations) / total) if total else 0.0,
        seed=campaign_seed,
        wall_time=time.perf_counter() - started,
    )
    if out_dir is not None:
        write_campaign_outputs(Path(out_dir), summary, violations, rows, space)
    return summary, violations


def write_campaign_outputs(out_dir: Path, summary: CampaignSummary,
                           violations: list[ViolationRecord], rows: list[dict],
                           space: ConfigSpace) -> None:
    """Persist the campaign artifacts.

    All three top-level files are byte-deterministic for a fixed
    (seed, run-count) campaign; the summary therefore carries wall_time
    as null on disk (the measured value lives on the in-memory summary).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    traces_dir = out_dir / "traces"
    traces_dir.mkdir(exist_ok=True)

    for record in violations:
        rel = f"traces/trial_{record.trial:05d}.jsonl"
        write_trace_jsonl(record.trace, out_dir / rel)
        record.trace_ref = rel

    with open(out_dir / "violations.jsonl", "w") as fh:
        for record in violations:
            fh.write(json.dumps({
                "trial": record.trial,
                "config": record.config.as_dict(),
                "witness_t": record.witness_time,
                "signature": record.signature,
                "trace_file": record.trace_ref,
            }, sort_keys=True) + "\n")

    with open(out_dir / "summary.json", "w") as fh:
        fh.write(json.dumps({
            "total_runs": summary.total_runs,
            "unique_violations": summary.unique_violations,
            "violation_rate": summary.violation_rate,
            "seed": summary.seed,
            "wall_time": None,
        }, sort_keys=True, indent=2) + "\n")

    write_margins_csv(out_dir / "margins.csv", rows, space)


def write_margins_csv(path, rows: list[dict], space: ConfigSpace) -> None:
    config_fields = sorted(space.bounds)
    header = ["trial", "battery_margin", "altitude_margin", "in_band",
              "verdict", "quadrant"] + config_fields
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [row["trial"], row["battery_margin"], row["altitude_margin"],
                 row["in_band"], row["verdict"], row["quadrant"]]
                + [row["config"][name] for name in config_fields])
