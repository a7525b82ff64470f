"""Property-guided reduction of hybrid systems.

Given a system and a property, this module computes which signals the
property can observe or influence, prunes the mode graph down to the
modes that matter for those signals, and assembles an executable reduced
system over the projected state.

The relevance analysis is a syntactic dependency closure over the
dependency sets declared by dynamics, guards, and resets:

  * the signals named by the property's atoms are relevant;
  * whatever the rate of a relevant signal reads is relevant;
  * whatever a reset expression writing a relevant signal reads is
    relevant, and so is whatever the guard triggering that reset reads.

Mode pruning then keeps the modes reachable from the analysis entry mode
through guards that only read relevant signals, provided they write a
relevant signal, guard on one, or lie on an execution path toward a mode
that does.  This is one conservative instantiation of property
relevance; the resulting reduced system is validated against the full
system empirically (per-configuration verdict agreement), not by proof.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Optional

from .config import ConfigSpace
from .errors import ProjectionError, ReductionError, SpecificationError
from .hybrid import ContinuousDynamics, HybridSystem, ModeId, Transition
from .stl import StlFormula, atom_signals

SignalSet = frozenset


@dataclass
class RelevanceReport:
    """Which modes, guards, and signals survived the reduction, and why."""

    modes_kept: frozenset[str]
    modes_dropped: frozenset[str]
    guards_kept: dict[str, tuple[str, ...]]
    signals_kept: frozenset[str]
    reasons: dict[str, str]
    entry_mode: str

    def to_json(self) -> str:
        return json.dumps({
            "entry_mode": self.entry_mode,
            "modes_kept": sorted(self.modes_kept),
            "modes_dropped": sorted(self.modes_dropped),
            "guards_kept": {m: list(v) for m, v in sorted(self.guards_kept.items())},
            "signals_kept": sorted(self.signals_kept),
            "reasons": dict(sorted(self.reasons.items())),
        }, indent=2, sort_keys=True)


@dataclass
class ReducedSystem:
    """Executable reduced system plus its audit report and parameter space."""

    system: HybridSystem
    report: RelevanceReport
    parameter_space: Optional[ConfigSpace] = None


def relevant_signals(formula: StlFormula, system: HybridSystem) -> frozenset[str]:
    """Dependency closure of the signals the property references."""
    atoms = atom_signals(formula)
    unknown = atoms - set(system.signal_names)
    if unknown:
        raise SpecificationError(
            f"property references unknown signals {sorted(unknown)}; "
            f"system signals: {list(system.signal_names)}")
    closure = set(atoms)
    changed = True
    while changed:
        changed = False
        for mode in system.modes:
            dyn = system.dynamics[mode.name]
            for sig, expr in dyn.rates.items():
                if sig in closure and not expr.reads <= closure:
                    closure |= expr.reads
                    changed = True
            for label, tr in system.transitions[mode.name].items():
                touched = False
                for sig, expr in tr.reset.items():
                    if sig in closure:
                        touched = True
                        if not expr.reads <= closure:
                            closure |= expr.reads
                            changed = True
                if touched:
                    for g in system.guards[mode.name]:
                        if g.label == label and not g.reads <= closure:
                            closure |= g.reads
                            changed = True
    return frozenset(closure)


def relevant_modes(system: HybridSystem, signals: frozenset[str],
                   entry_mode: Optional[str] = None) -> RelevanceReport:
    """Prune the mode graph to the modes that matter for ``signals``."""
    if not signals:
        raise SpecificationError("relevance analysis needs a nonempty signal set")
    entry = entry_mode or system.initial_mode
    names = [m.name for m in system.modes]
    if entry not in names:
        raise ReductionError(f"entry mode {entry!r} is not a mode of the system")

    def ok_guards(mode: str):
        return [g for g in system.guards[mode] if g.reads <= signals]

    # reachability from the entry over guards that survive the signal filter
    reachable: set[str] = set()
    frontier = [entry]
    while frontier:
        mode = frontier.pop()
        if mode in reachable:
            continue
        reachable.add(mode)
        for g in ok_guards(mode):
            frontier.append(system.transitions[mode][g.label].target)

    def writes_kept(mode: str) -> bool:
        dyn = system.dynamics[mode]
        if any(sig in signals for sig in dyn.rates):
            return True
        return any(set(tr.reset) & signals
                   for tr in system.transitions[mode].values())

    def guards_on_kept(mode: str) -> bool:
        return any(g.reads & signals for g in ok_guards(mode))

    anchors = {m for m in reachable if writes_kept(m) or guards_on_kept(m)}

    # every reachable mode lies on a path from the entry; keep it when an
    # anchor is still ahead of it, so execution paths toward the property's
    # modes stay intact while irrelevant tails fall away
    pred: dict[str, list[str]] = {m: [] for m in reachable}
    for m in reachable:
        for g in ok_guards(m):
            target = system.transitions[m][g.label].target
            if target in pred:
                pred[target].append(m)
    can_reach_anchor = set(anchors)
    frontier = list(anchors)
    while frontier:
        mode = frontier.pop()
        for prev in pred[mode]:
            if prev not in can_reach_anchor:
                can_reach_anchor.add(prev)
                frontier.append(prev)

    kept = anchors | can_reach_anchor
    if entry not in kept:
        raise ReductionError(
            f"reduction would drop the entry mode {entry!r}; "
            "the property cannot be scoped to this entry")

    guards_kept = {}
    reasons: dict[str, str] = {}
    for mode in names:
        if mode in kept:
            labels = tuple(g.label for g in ok_guards(mode)
                           if system.transitions[mode][g.label].target in kept)
            guards_kept[mode] = labels
            why = []
            if writes_kept(mode):
                why.append("writes a relevant signal")
            if guards_on_kept(mode):
                why.append("guards on a relevant signal")
            if not why:
                why.append("lies on an execution path to a relevant mode")
            reasons[f"mode:{mode}"] = "kept: " + ", ".join(why)
        else:
            if mode not in reachable:
                reasons[f"mode:{mode}"] = ("dropped: unreachable from entry "
                                           "over relevant guards")
            else:
                reasons[f"mode:{mode}"] = ("dropped: touches no relevant signal and "
                                           "is not between relevant modes")
        for g in system.guards[mode]:
            if mode not in kept:
                continue
            if g.label not in guards_kept[mode]:
                if not g.reads <= signals:
                    reasons[f"guard:{mode}:{g.label}"] = (
                        f"dropped: reads irrelevant signals {sorted(g.reads - signals)}")
                else:
                    reasons[f"guard:{mode}:{g.label}"] = (
                        f"dropped: target {system.transitions[mode][g.label].target} "
                        "was dropped")

    return RelevanceReport(
        modes_kept=frozenset(kept),
        modes_dropped=frozenset(set(names) - kept),
        guards_kept=guards_kept,
        signals_kept=frozenset(signals),
        reasons=reasons,
        entry_mode=entry,
    )


def project_dynamics(dyn: ContinuousDynamics, kept: frozenset[str],
                     signal_order: tuple[str, ...]) -> ContinuousDynamics:
    """Restrict a vector field to the kept signals.

    Raises ProjectionError if the rate of a kept signal reads a dropped one.
    """
    rates = {}
    for sig, expr in dyn.rates.items():
        if sig not in kept:
            continue
        dangling = expr.reads - kept
        if dangling:
            raise ProjectionError(
                f"rate of kept signal {sig!r} reads dropped signals {sorted(dangling)}")
        rates[sig] = expr
    return ContinuousDynamics(signal_order, rates)


def build_surrogate(system: HybridSystem, formula: StlFormula,
                    condensed_dynamics: Optional[Mapping[str, ContinuousDynamics]] = None,
                    entry_mode: Optional[str] = None,
                    parameter_space: Optional[ConfigSpace] = None) -> ReducedSystem:
    """Assemble the executable reduced system for ``formula``.

    Per-mode dynamics are taken from ``condensed_dynamics`` where given,
    otherwise the original dynamics projected onto the kept signals.  The
    parameter space, when provided, is restricted to the parameters the
    reduced system actually reads.
    """
    signals = relevant_signals(formula, system)
    report = relevant_modes(system, signals, entry_mode=entry_mode)
    kept_order = tuple(s for s in system.signal_names if s in signals)

    condensed = dict(condensed_dynamics or {})
    modes = [m for m in system.modes if m.name in report.modes_kept]
    reduced_modes = [ModeId(m.name, i) for i, m in enumerate(modes)]
    dynamics: dict[str, ContinuousDynamics] = {}
    guards = {}
    transitions: dict[str, dict[str, Transition]] = {}
    params_used: set[str] = set()

    for m in reduced_modes:
        if m.name in condensed:
            dyn = condensed[m.name]
            if tuple(dyn.signal_names) != kept_order:
                raise ProjectionError(
                    f"condensed dynamics for {m.name} are over {dyn.signal_names}, "
                    f"expected {kept_order}")
        else:
            dyn = project_dynamics(system.dynamics[m.name], signals, kept_order)
        dynamics[m.name] = dyn
        params_used |= dyn.param_reads()

        kept_labels = set(report.guards_kept.get(m.name, ()))
        kept_guards = tuple(g for g in system.guards[m.name] if g.label in kept_labels)
        guards[m.name] = kept_guards
        for g in kept_guards:
            params_used |= g.param_reads
        transitions[m.name] = {}
        for label in kept_labels:
            tr = system.transitions[m.name][label]
            reset = {}
            for sig, expr in tr.reset.items():
                if sig not in signals:
                    continue
                dangling = expr.reads - signals
                if dangling:
                    raise ProjectionError(
                        f"reset of {label!r} writes kept signal {sig!r} but reads "
                        f"dropped signals {sorted(dangling)}")
                reset[sig] = expr
                params_used |= expr.params
            transitions[m.name][label] = Transition(target=tr.target, reset=reset)

    initials = {}
    for sig in kept_order:
        init = system.initials.get(sig, 0.0)
        initials[sig] = init
        if isinstance(init, str):
            params_used.add(init)

    reduced = HybridSystem(
        modes=reduced_modes,
        dynamics=dynamics,
        guards=guards,
        transitions=transitions,
        initial_mode=report.entry_mode,
        initials=initials,
    )
    space = parameter_space.restricted(params_used) if parameter_space is not None else None
    return ReducedSystem(system=reduced, report=report, parameter_space=space)


def verify_projection_closure(rs: ReducedSystem) -> bool:
    """True iff no kept guard, reset, or dynamics reads a dropped signal."""
    available = set(rs.system.signal_names)
    for mode in rs.system.modes:
        dyn = rs.system.dynamics[mode.name]
        for expr in dyn.rates.values():
            if not expr.reads <= available:
                return False
        for g in rs.system.guards[mode.name]:
            if not g.reads <= available:
                return False
        for tr in rs.system.transitions[mode.name].values():
            for expr in tr.reset.values():
                if not expr.reads <= available:
                    return False
    return True
