"""Hybrid dynamical systems: modes, guarded transitions, and simulation.

A system couples a finite set of control modes with per-mode continuous
dynamics over one shared, ordered list of named signals.  Guards are
predicates over the named state; when a guard fires, its transition's
reset rewrites selected signals and the mode switches.

Dynamics, guards, and resets all declare the signals and configuration
parameters they read.  The declarations make the models statically
analyzable: the property-guided reduction works purely on these declared
dependency sets, never by introspecting the callables.

Integration is explicit forward Euler with a fixed step.  Guards are
evaluated on the initial sample and after every integration step, in
declaration order; the first guard whose predicate holds fires.  The
recorded sample at an event time carries the pre-transition state and
mode, so a trace always shows the state the guard actually tested.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError, ProjectionError, SimulationFault

StateMap = Mapping[str, float]
Params = Mapping[str, float]


@dataclass(frozen=True)
class ModeId:
    """Discrete control mode, unique by name within a system."""

    name: str
    index: int


@dataclass(frozen=True)
class StateExpr:
    """A scalar function of the named state and configuration.

    ``reads`` and ``params`` declare exactly which signals / configuration
    parameters ``func`` consults; the reduction machinery trusts these
    declarations.
    """

    func: Callable[[StateMap, Params], float]
    reads: frozenset[str] = frozenset()
    params: frozenset[str] = frozenset()


class ContinuousDynamics:
    """Per-mode vector field over the shared signal list.

    ``rates`` maps a signal name to the :class:`StateExpr` computing its
    time derivative; signals without an entry have derivative zero.  A
    dynamics object with no entries is static, which (together with the
    absence of outgoing guards) marks a terminal mode.
    """

    def __init__(self, signal_names: Sequence[str], rates: Mapping[str, StateExpr]):
        self.signal_names = tuple(signal_names)
        unknown = set(rates) - set(self.signal_names)
        if unknown:
            raise ConfigurationError(f"rates for undeclared signals: {sorted(unknown)}")
        self.rates = dict(rates)

    @property
    def dimension(self) -> int:
        return len(self.signal_names)

    @property
    def is_static(self) -> bool:
        return not self.rates

    def vector_field(self, state: np.ndarray, parameters: Params) -> np.ndarray:
        """Derivative vector for ``state`` given in signal order."""
        named = dict(zip(self.signal_names, state))
        out = np.zeros(self.dimension)
        for i, name in enumerate(self.signal_names):
            expr = self.rates.get(name)
            if expr is not None:
                out[i] = expr.func(named, parameters)
        return out

    def reads(self) -> frozenset[str]:
        out: set[str] = set()
        for expr in self.rates.values():
            out |= expr.reads
        return frozenset(out)

    def param_reads(self) -> frozenset[str]:
        out: set[str] = set()
        for expr in self.rates.values():
            out |= expr.params
        return frozenset(out)


@dataclass(frozen=True)
class Guard:
    """Predicate triggering a transition out of its source mode."""

    label: str
    predicate: Callable[[StateMap, Params], bool]
    reads: frozenset[str] = frozenset()
    param_reads: frozenset[str] = frozenset()
    source: str = ""


@dataclass(frozen=True)
class Transition:
    """Target mode plus the reset applied when the guard fires.

    ``reset`` maps signal names to new-value expressions; signals without
    an entry carry over unchanged.
    """

    target: str
    reset: Mapping[str, StateExpr] = field(default_factory=dict)

    def reset_writes(self) -> frozenset[str]:
        return frozenset(self.reset)


@dataclass
class HybridSystem:
    """The tuple of modes, per-mode dynamics, guards, and transition maps.

    ``initials`` gives the default initial value per signal: a float, or
    the name of a configuration parameter to read it from.  Instances are
    treated as immutable after construction.
    """

    modes: list[ModeId]
    dynamics: dict[str, ContinuousDynamics]
    guards: dict[str, tuple[Guard, ...]]
    transitions: dict[str, dict[str, Transition]]
    initial_mode: str
    initials: dict[str, Union[float, str]] = field(default_factory=dict)

    def __post_init__(self):
        names = [m.name for m in self.modes]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate mode names: {names}")
        for i, m in enumerate(self.modes):
            if m.index != i:
                raise ConfigurationError(f"mode {m.name} has index {m.index}, expected {i}")
        if self.initial_mode not in names:
            raise ConfigurationError(f"initial mode {self.initial_mode!r} not in {names}")
        sig_lists = set()
        for name in names:
            if name not in self.dynamics:
                raise ConfigurationError(f"mode {name} has no dynamics")
            sig_lists.add(self.dynamics[name].signal_names)
        if len(sig_lists) != 1:
            raise ConfigurationError("all modes must share one ordered signal list")
        self.signal_names = next(iter(sig_lists))
        # normalize guard/transition tables, stamping guard sources
        for name in names:
            self.guards.setdefault(name, ())
            self.transitions.setdefault(name, {})
            stamped = tuple(replace(g, source=name) for g in self.guards[name])
            labels = [g.label for g in stamped]
            if len(set(labels)) != len(labels):
                raise ConfigurationError(f"duplicate guard labels in mode {name}: {labels}")
            self.guards[name] = stamped
            for g in stamped:
                if g.label not in self.transitions[name]:
                    raise ConfigurationError(
                        f"guard {g.label!r} of mode {name} has no transition entry")
            for label, tr in self.transitions[name].items():
                if tr.target not in names:
                    raise ConfigurationError(
                        f"transition {label!r} of mode {name} targets unknown mode {tr.target!r}")
                bad = set(tr.reset) - set(self.signal_names)
                if bad:
                    raise ConfigurationError(
                        f"reset of {label!r} writes undeclared signals: {sorted(bad)}")
        bad = set(self.initials) - set(self.signal_names)
        if bad:
            raise ConfigurationError(f"initials for undeclared signals: {sorted(bad)}")

    def mode(self, name: str) -> ModeId:
        for m in self.modes:
            if m.name == name:
                return m
        raise ConfigurationError(f"unknown mode {name!r}")

    def with_entry(self, mode_name: str) -> "HybridSystem":
        """Copy of the system starting in ``mode_name``."""
        if mode_name not in (m.name for m in self.modes):
            raise ConfigurationError(f"unknown mode {mode_name!r}")
        return HybridSystem(
            modes=list(self.modes),
            dynamics=dict(self.dynamics),
            guards=dict(self.guards),
            transitions=dict(self.transitions),
            initial_mode=mode_name,
            initials=dict(self.initials),
        )

    def is_terminal(self, mode_name: str) -> bool:
        return not self.guards[mode_name] and self.dynamics[mode_name].is_static

    def initial_state(self, parameters: Params) -> np.ndarray:
        """Initial state vector built from ``initials`` and the configuration."""
        out = np.zeros(len(self.signal_names))
        for i, name in enumerate(self.signal_names):
            init = self.initials.get(name, 0.0)
            if isinstance(init, str):
                try:
                    out[i] = float(parameters[init])
                except KeyError:
                    raise ConfigurationError(
                        f"initial value of signal {name!r} needs parameter {init!r}") from None
            else:
                out[i] = float(init)
        return out

    def structure_summary(self) -> dict:
        """Comparable description of the discrete structure (no callables)."""
        return {
            "signals": list(self.signal_names),
            "modes": [m.name for m in self.modes],
            "initial_mode": self.initial_mode,
            "guards": {
                m.name: [
                    {"label": g.label, "reads": sorted(g.reads),
                     "params": sorted(g.param_reads),
                     "target": self.transitions[m.name][g.label].target,
                     "reset_writes": sorted(self.transitions[m.name][g.label].reset)}
                    for g in self.guards[m.name]
                ]
                for m in self.modes
            },
            "dynamics": {
                m.name: {s: sorted(self.dynamics[m.name].rates[s].reads)
                         for s in sorted(self.dynamics[m.name].rates)}
                for m in self.modes
            },
            "initials": {k: v for k, v in sorted(self.initials.items())},
        }


@dataclass(frozen=True)
class TraceEvent:
    time: float
    guard: str
    source: str
    target: str


class Trace:
    """Uniformly sampled execution: times, per-sample mode, named signal arrays."""

    def __init__(self, times: np.ndarray, modes: list[str],
                 signals: dict[str, np.ndarray], events: list[TraceEvent],
                 dt: float, settled: bool = False):
        self.times = times
        self.modes = modes
        self.signals = signals
        self.events = events
        self.dt = dt
        self.settled = settled

    def __len__(self) -> int:
        return len(self.times)

    def sample(self, i: int) -> tuple[float, str, dict[str, float]]:
        return (float(self.times[i]), self.modes[i],
                {k: float(v[i]) for k, v in self.signals.items()})

    def signal_names(self) -> list[str]:
        return list(self.signals)

    def final_state(self) -> dict[str, float]:
        return {k: float(v[-1]) for k, v in self.signals.items()}


def project_trace(trace: Trace, signals: Sequence[str]) -> Trace:
    """Restrict the signal map to ``signals``; times, modes, events unchanged."""
    missing = [s for s in signals if s not in trace.signals]
    if missing:
        raise ProjectionError(
            f"unknown signals {missing}; available: {sorted(trace.signals)}")
    return Trace(
        times=trace.times,
        modes=trace.modes,
        signals={s: trace.signals[s] for s in signals},
        events=trace.events,
        dt=trace.dt,
        settled=trace.settled,
    )


def _first_fired_guard(system: HybridSystem, mode: str, named: StateMap,
                       parameters: Params) -> Optional[Guard]:
    for g in system.guards[mode]:
        if g.predicate(named, parameters):
            return g
    return None


def _apply_reset(system: HybridSystem, transition: Transition,
                 named: StateMap, parameters: Params) -> list[float]:
    new = []
    for name in system.signal_names:
        expr = transition.reset.get(name)
        if expr is None:
            new.append(named[name])
        else:
            new.append(float(expr.func(named, parameters)))
    return new


def step(system: HybridSystem, mode: str, state: np.ndarray, parameters: Params,
         dt: float) -> tuple[str, np.ndarray, Optional[str]]:
    """One integration step followed by a guard check.

    Returns the (possibly switched) mode, the post-step (and post-reset,
    if a guard fired) state, and the fired guard's label or None.
    """
    if dt <= 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if len(state) != len(system.signal_names):
        raise ConfigurationError(
            f"state has {len(state)} entries, mode {mode} expects {len(system.signal_names)}")
    dyn = system.dynamics[mode]
    named = dict(zip(system.signal_names, (float(v) for v in state)))
    new = [named[n] + dt * dyn.rates[n].func(named, parameters)
           if n in dyn.rates else named[n]
           for n in system.signal_names]
    for name, value in zip(system.signal_names, new):
        if not math.isfinite(value):
            raise SimulationFault(dt, name, value)
    named = dict(zip(system.signal_names, new))
    fired = _first_fired_guard(system, mode, named, parameters)
    if fired is None:
        return mode, np.array(new), None
    transition = system.transitions[mode][fired.label]
    return transition.target, np.array(
        _apply_reset(system, transition, named, parameters)), fired.label


def simulate(system: HybridSystem, initial_state: Optional[Sequence[float]],
             parameters: Params, dt: float, horizon: float) -> Trace:
    """Run the system over [0, horizon] with fixed step ``dt``.

    ``initial_state`` may be None, in which case it is built from the
    system's declared initials and the configuration.  Simulation ends
    early, with the trace marked settled, when a terminal mode (no
    outgoing guards, static dynamics) is entered.
    """
    if dt <= 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if horizon < dt:
        raise ConfigurationError(f"horizon {horizon} must be at least dt {dt}")
    names = system.signal_names
    nsig = len(names)
    if initial_state is None:
        state = [float(v) for v in system.initial_state(parameters)]
    else:
        if len(initial_state) != nsig:
            raise ConfigurationError(
                f"initial state has {len(initial_state)} entries, expected {nsig}")
        state = [float(v) for v in initial_state]

    n_steps = int(round(horizon / dt))
    data = np.empty((n_steps + 1, nsig))
    modes: list[str] = []
    events: list[TraceEvent] = []
    n_recorded = 0
    settled = False

    mode = system.initial_mode
    dyn = system.dynamics[mode]
    rate_items = [(i, names[i], dyn.rates[names[i]].func)
                  for i in range(nsig) if names[i] in dyn.rates]

    def record(named_state: StateMap):
        nonlocal n_recorded
        for i, n in enumerate(names):
            data[n_recorded, i] = named_state[n]
        modes.append(mode)
        n_recorded += 1

    named = dict(zip(names, state))
    record(named)
    fired = _first_fired_guard(system, mode, named, parameters)
    if fired is not None:
        transition = system.transitions[mode][fired.label]
        events.append(TraceEvent(0.0, fired.label, mode, transition.target))
        state = _apply_reset(system, transition, named, parameters)
        mode = transition.target
        dyn = system.dynamics[mode]
        rate_items = [(i, names[i], dyn.rates[names[i]].func)
                      for i in range(nsig) if names[i] in dyn.rates]

    for k in range(1, n_steps + 1):
        if system.is_terminal(mode):
            settled = True
            break
        t = k * dt
        named = dict(zip(names, state))
        for i, name, f in rate_items:
            value = state[i] + dt * f(named, parameters)
            if not math.isfinite(value):
                raise SimulationFault(t, name, value)
            state[i] = value
        named = dict(zip(names, state))
        record(named)
        fired = _first_fired_guard(system, mode, named, parameters)
        if fired is not None:
            transition = system.transitions[mode][fired.label]
            events.append(TraceEvent(t, fired.label, mode, transition.target))
            state = _apply_reset(system, transition, named, parameters)
            mode = transition.target
            dyn = system.dynamics[mode]
            rate_items = [(i, names[i], dyn.rates[names[i]].func)
                          for i in range(nsig) if names[i] in dyn.rates]

    data = data[:n_recorded]
    times = np.arange(n_recorded) * dt
    signals = {name: data[:, i].copy() for i, name in enumerate(names)}
    return Trace(times=times, modes=modes, signals=signals, events=events,
                 dt=dt, settled=settled)


# ---------------------------------------------------------------------------
# Trace serialization (JSON lines)
# ---------------------------------------------------------------------------

def trace_to_jsonl(trace: Trace) -> str:
    """Serialize: header object, one object per sample, then event records."""
    seen: list[str] = []
    for m in trace.modes:
        if m not in seen:
            seen.append(m)
    lines = [json.dumps({"dt": trace.dt, "signals": list(trace.signals),
                         "modes": seen}, sort_keys=True)]
    names = list(trace.signals)
    for i in range(len(trace)):
        lines.append(json.dumps({
            "t": float(trace.times[i]),
            "mode": trace.modes[i],
            "signals": {n: float(trace.signals[n][i]) for n in names},
        }, sort_keys=True))
    for ev in trace.events:
        lines.append(json.dumps({"event": {
            "t": ev.time, "guard": ev.guard, "from": ev.source, "to": ev.target,
        }}, sort_keys=True))
    return "\n".join(lines) + "\n"


def write_trace_jsonl(trace: Trace, path) -> None:
    with open(path, "w") as fh:
        fh.write(trace_to_jsonl(trace))


def read_trace_jsonl(path) -> Trace:
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    header = lines[0]
    samples = [rec for rec in lines[1:] if "event" not in rec]
    events = [rec["event"] for rec in lines[1:] if "event" in rec]
    times = np.array([rec["t"] for rec in samples])
    modes = [rec["mode"] for rec in samples]
    signals = {name: np.array([rec["signals"][name] for rec in samples])
               for name in header["signals"]}
    return Trace(
        times=times, modes=modes, signals=signals,
        events=[TraceEvent(ev["t"], ev["guard"], ev["from"], ev["to"]) for ev in events],
        dt=header["dt"],
    )
