"""Bounded signal temporal logic over finite, uniformly sampled traces.

Formulas are ASTs over comparisons between named signals and constants,
boolean connectives, and the time-bounded operators G (globally),
F (eventually) and U (until).  Intervals are given in seconds and are
converted to sample-index windows by rounding each bound to the nearest
sample, ties rounding up.  G without an interval is unbounded and ranges
over the remainder of the trace.

Semantics are pointwise over sample indices with a three-valued
(Kleene) treatment of the trace end: a sample index beyond the last
recorded sample has unknown truth value, so a bounded window that
extends past the end of the trace can make a subformula undetermined.
An undetermined top-level result is judged pessimistically as Violated,
with ``window_truncated`` set on the verdict so callers may re-simulate
with a longer horizon before accepting the outcome.

Boolean signals are encoded as reals; a bare signal atom is true when
the signal value is >= 0.5.

Reference semantics, shared by this evaluator and the independent
naive evaluator used in the test suite:

  value(Atom, i)        = compare(sig[i]) if i < n else Unknown
  value(Not f, i)       = kleene-not value(f, i)
  value(f And g, i)     = kleene-and
  value(f Or g, i)      = kleene-or
  value(f -> g, i)      = kleene-or(not f, g)
  value(G f, i)         = AND over j in [i, n)                (unbounded; no padding)
  value(G[a,b] f, i)    = AND over j in [i+ia, i+ib]          (j >= n contributes Unknown)
  value(F[a,b] f, i)    = OR  over j in [i+ia, i+ib]          (j >= n contributes Unknown)
  value(f U[a,b] g, i)  = OR over j in [i+ia, i+ib] of
                            AND( value(g, j), AND over k in [i, j) of value(f, k) )

where ia, ib are the rounded index bounds.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from .errors import EvaluationError, ParseError

# Three-valued encoding ordered so that kleene AND = min and OR = max.
FALSE = 0
UNKNOWN = 1
TRUE = 2

BOOL_THRESHOLD = 0.5

_COMPARATORS = ("<=", "<", ">=", ">", "==")


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    """``signal op constant`` comparison, or a bare boolean signal (op=None)."""

    signal: str
    op: Optional[str] = None
    value: Optional[float] = None

    def __post_init__(self):
        if (self.op is None) != (self.value is None):
            raise ValueError("comparison atoms need both op and value")
        if self.op is not None and self.op not in _COMPARATORS:
            raise ValueError(f"unknown comparator {self.op!r}")


@dataclass(frozen=True)
class Not:
    child: "StlFormula"


@dataclass(frozen=True)
class And:
    left: "StlFormula"
    right: "StlFormula"


@dataclass(frozen=True)
class Or:
    left: "StlFormula"
    right: "StlFormula"


@dataclass(frozen=True)
class Implies:
    left: "StlFormula"
    right: "StlFormula"


@dataclass(frozen=True)
class Globally:
    """G with optional [lo, hi] interval in seconds; None means unbounded."""

    child: "StlFormula"
    interval: Optional[tuple[float, float]] = None

    def __post_init__(self):
        _check_interval(self.interval)


@dataclass(frozen=True)
class Eventually:
    child: "StlFormula"
    interval: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        _check_interval(self.interval)


@dataclass(frozen=True)
class Until:
    left: "StlFormula"
    right: "StlFormula"
    interval: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        _check_interval(self.interval)


StlFormula = Union[Atom, Not, And, Or, Implies, Globally, Eventually, Until]


def _check_interval(interval):
    if interval is None:
        return
    lo, hi = interval
    if not (0 <= lo <= hi):
        raise ValueError(f"interval must satisfy 0 <= lo <= hi, got {interval}")


def atom_signals(formula: StlFormula) -> frozenset[str]:
    """All signal names referenced by the formula's atoms."""
    if isinstance(formula, Atom):
        return frozenset({formula.signal})
    if isinstance(formula, Not):
        return atom_signals(formula.child)
    if isinstance(formula, (And, Or, Implies, Until)):
        return atom_signals(formula.left) | atom_signals(formula.right)
    if isinstance(formula, (Globally, Eventually)):
        return atom_signals(formula.child)
    raise TypeError(f"not a formula node: {formula!r}")


# ---------------------------------------------------------------------------
# Verdict
# ---------------------------------------------------------------------------

class Outcome(Enum):
    SATISFIED = "Satisfied"
    VIOLATED = "Violated"


@dataclass(frozen=True)
class Verdict:
    """Boolean result of one formula on one trace.

    ``witness_time`` is the first violation time, reported only when the
    top-level operator is Globally and the verdict is Violated.
    ``window_truncated`` marks a pessimistic verdict whose deciding window
    extended past the end of the trace; callers may re-simulate once with
    a longer horizon before accepting it.
    """

    outcome: Outcome
    witness_time: Optional[float] = None
    window_truncated: bool = False

    @property
    def violated(self) -> bool:
        return self.outcome is Outcome.VIOLATED


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _index_bound(seconds: float, dt: float) -> int:
    # round to nearest sample, ties up
    return int(math.floor(seconds / dt + 0.5))


def _atom_values(atom: Atom, trace) -> np.ndarray:
    if atom.signal not in trace.signals:
        raise EvaluationError(
            f"formula references signal '{atom.signal}' not present in trace; "
            f"available: {sorted(trace.signals)}"
        )
    sig = trace.signals[atom.signal]
    if atom.op is None:
        truth = sig >= BOOL_THRESHOLD
    elif atom.op == "<=":
        truth = sig <= atom.value
    elif atom.op == "<":
        truth = sig < atom.value
    elif atom.op == ">=":
        truth = sig >= atom.value
    elif atom.op == ">":
        truth = sig > atom.value
    else:
        truth = sig == atom.value
    return np.where(truth, TRUE, FALSE).astype(np.int8)


def _window_fold(vals: np.ndarray, lo: int, hi: int, fold: str) -> np.ndarray:
    """Fold (min or max) over the window [i+lo, i+hi] for every index i.

    Indices beyond the end of ``vals`` contribute UNKNOWN, which is what the
    padding provides.
    """
    n = len(vals)
    padded = np.concatenate([vals, np.full(hi, UNKNOWN, dtype=np.int8)])
    width = hi - lo + 1
    windows = np.lib.stride_tricks.sliding_window_view(padded[lo:], width)[:n]
    if fold == "min":
        return windows.min(axis=1).astype(np.int8)
    return windows.max(axis=1).astype(np.int8)


_NOT_LUT = np.array([TRUE, UNKNOWN, FALSE], dtype=np.int8)


def _values(formula: StlFormula, trace, dt: float) -> np.ndarray:
    """Three-valued truth of ``formula`` at every sample index."""
    n = len(trace.times)
    if isinstance(formula, Atom):
        return _atom_values(formula, trace)
    if isinstance(formula, Not):
        return _NOT_LUT[_values(formula.child, trace, dt)]
    if isinstance(formula, And):
        return np.minimum(_values(formula.left, trace, dt), _values(formula.right, trace, dt))
    if isinstance(formula, Or):
        return np.maximum(_values(formula.left, trace, dt), _values(formula.right, trace, dt))
    if isinstance(formula, Implies):
        lhs = _NOT_LUT[_values(formula.left, trace, dt)]
        return np.maximum(lhs, _values(formula.right, trace, dt))
    if isinstance(formula, Globally):
        child = _values(formula.child, trace, dt)
        if formula.interval is None:
            # unbounded: suffix conjunction over the recorded trace only
            return np.minimum.accumulate(child[::-1])[::-1]
        lo, hi = (_index_bound(b, dt) for b in formula.interval)
        return _window_fold(child, lo, hi, "min")
    if isinstance(formula, Eventually):
        child = _values(formula.child, trace, dt)
        lo, hi = (_index_bound(b, dt) for b in formula.interval)
        return _window_fold(child, lo, hi, "max")
    if isinstance(formula, Until):
        left = _values(formula.left, trace, dt)
        right = _values(formula.right, trace, dt)
        lo, hi = (_index_bound(b, dt) for b in formula.interval)
        lpad = np.concatenate([left, np.full(hi, UNKNOWN, dtype=np.int8)])
        rpad = np.concatenate([right, np.full(hi, UNKNOWN, dtype=np.int8)])
        acc = np.full(n, FALSE, dtype=np.int8)
        prefix = np.full(n, TRUE, dtype=np.int8)  # AND of left over [i, i+o)
        for o in range(hi + 1):
            if o >= lo:
                acc = np.maximum(acc, np.minimum(rpad[o:o + n], prefix))
            prefix = np.minimum(prefix, lpad[o:o + n])
        return acc
    raise TypeError(f"not a formula node: {formula!r}")


def _check_trace(formula: StlFormula, trace) -> float:
    times = trace.times
    if len(times) == 0:
        raise EvaluationError("cannot evaluate a formula on an empty trace")
    dt = trace.dt
    expected = np.arange(len(times)) * dt
    if not np.allclose(times, expected, rtol=0.0, atol=1e-9 * max(dt, 1.0)):
        raise EvaluationError("trace is not uniformly sampled at its declared dt")
    missing = sorted(atom_signals(formula) - set(trace.signals))
    if missing:
        raise EvaluationError(
            f"formula references signals {missing} not present in trace; "
            f"available: {sorted(trace.signals)}")
    return dt


def evaluate(formula: StlFormula, trace) -> Verdict:
    """Evaluate ``formula`` at the start of ``trace``.

    Returns a :class:`Verdict`.  An undetermined result (a deciding window
    ran past the end of the trace) is pessimistically Violated with
    ``window_truncated`` set.
    """
    dt = _check_trace(formula, trace)
    vals = _values(formula, trace, dt)
    root = int(vals[0])
    if root == TRUE:
        return Verdict(Outcome.SATISFIED)
    witness = None
    if isinstance(formula, Globally):
        body = _values(formula.child, trace, dt)
        if formula.interval is None:
            lo, hi = 0, len(body) - 1
        else:
            lo, hi = (_index_bound(b, dt) for b in formula.interval)
            hi = min(hi, len(body) - 1)
        for i in range(lo, hi + 1):
            if body[i] != TRUE:
                witness = float(trace.times[i])
                break
    return Verdict(Outcome.VIOLATED, witness_time=witness,
                   window_truncated=(root == UNKNOWN))


# ---------------------------------------------------------------------------
# Built-in safety property
# ---------------------------------------------------------------------------

def builtin_phi(delta: float, battery_threshold: float = 10.0,
                airborne_min_altitude: float = 0.5) -> StlFormula:
    """Low battery while airborne must be followed by deployment within ``delta`` seconds.

    G( (battery <= battery_threshold and altitude > airborne_min_altitude)
       -> F[0, delta] deployed_flag >= 0.5 )
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    antecedent = And(
        Atom("battery", "<=", float(battery_threshold)),
        Atom("altitude", ">", float(airborne_min_altitude)),
    )
    consequent = Eventually(Atom("deployed_flag", ">=", BOOL_THRESHOLD),
                            interval=(0.0, float(delta)))
    return Globally(Implies(antecedent, consequent))


# ---------------------------------------------------------------------------
# Parser / pretty-printer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<sym><=|>=|==|->|[<>()\[\],]))"
)

_KEYWORDS = {"and", "or", "not", "G", "F", "U"}


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None or m.end() == pos:
                stripped = text[pos:].lstrip()
                if not stripped:
                    break
                raise ParseError(f"unexpected character {stripped[0]!r}", pos)
            if m.lastgroup is not None:
                self.tokens.append((m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.text))

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.next()
        if val != value:
            raise ParseError(f"expected {value!r}, found {val!r}", pos)

    def done(self) -> bool:
        return self.i >= len(self.tokens)


def parse(text: str) -> StlFormula:
    """Parse a property string into an AST.

    Grammar (lowest to highest precedence):
      implies := or ('->' implies)?
      or      := and ('or' and)*
      and     := until ('and' until)*
      until   := unary ('U' '[' num ',' num ']' unary)?
      unary   := 'not' unary | 'G' interval? unary | 'F' interval unary | primary
      primary := '(' implies ')' | NAME (cmp NUM)?
    """
    toks = _Tokens(text)
    formula = _parse_implies(toks)
    if not toks.done():
        kind, val, pos = toks.peek()
        raise ParseError(f"unexpected trailing token {val!r}", pos)
    return formula


def _parse_implies(toks: _Tokens) -> StlFormula:
    left = _parse_or(toks)
    if toks.peek()[1] == "->":
        toks.next()
        return Implies(left, _parse_implies(toks))
    return left


def _parse_or(toks: _Tokens) -> StlFormula:
    node = _parse_and(toks)
    while toks.peek()[1] == "or":
        toks.next()
        node = Or(node, _parse_and(toks))
    return node


def _parse_and(toks: _Tokens) -> StlFormula:
    node = _parse_until(toks)
    while toks.peek()[1] == "and":
        toks.next()
        node = And(node, _parse_until(toks))
    return node


def _parse_until(toks: _Tokens) -> StlFormula:
    node = _parse_unary(toks)
    if toks.peek()[1] == "U":
        toks.next()
        interval = _parse_interval(toks)
        return Until(node, _parse_unary(toks), interval=interval)
    return node


def _parse_interval(toks: _Tokens) -> tuple[float, float]:
    toks.expect("[")
    lo = _parse_number(toks)
    toks.expect(",")
    hi = _parse_number(toks)
    toks.expect("]")
    kind, val, pos = toks.peek()
    if not (0 <= lo <= hi):
        raise ParseError(f"bad interval [{lo},{hi}]", pos)
    return (lo, hi)


def _parse_number(toks: _Tokens) -> float:
    kind, val, pos = toks.next()
    if kind != "num":
        raise ParseError(f"expected a number, found {val!r}", pos)
    return float(val)


def _parse_unary(toks: _Tokens) -> StlFormula:
    kind, val, pos = toks.peek()
    if val == "not":
        toks.next()
        return Not(_parse_unary(toks))
    if val == "G":
        toks.next()
        interval = _parse_interval(toks) if toks.peek()[1] == "[" else None
        return Globally(_parse_unary(toks), interval=interval)
    if val == "F":
        toks.next()
        interval = _parse_interval(toks)
        return Eventually(_parse_unary(toks), interval=interval)
    return _parse_primary(toks)


def _parse_primary(toks: _Tokens) -> StlFormula:
    kind, val, pos = toks.next()
    if val == "(":
        node = _parse_implies(toks)
        toks.expect(")")
        return node
    if kind == "name" and val not in _KEYWORDS:
        nkind, nval, npos = toks.peek()
        if nval in _COMPARATORS:
            toks.next()
            return Atom(val, nval, _parse_number(toks))
        return Atom(val)
    raise ParseError(f"expected a signal name or '(', found {val!r}", pos)


def pretty_print(formula: StlFormula) -> str:
    """Canonical text form; ``parse(pretty_print(f))`` reproduces ``f``."""
    if isinstance(formula, Atom):
        if formula.op is None:
            return formula.signal
        return f"{formula.signal} {formula.op} {formula.value!r}"
    if isinstance(formula, Not):
        return f"not ({pretty_print(formula.child)})"
    if isinstance(formula, And):
        return f"({pretty_print(formula.left)} and {pretty_print(formula.right)})"
    if isinstance(formula, Or):
        return f"({pretty_print(formula.left)} or {pretty_print(formula.right)})"
    if isinstance(formula, Implies):
        return f"({pretty_print(formula.left)} -> {pretty_print(formula.right)})"
    if isinstance(formula, Globally):
        body = f"({pretty_print(formula.child)})"
        if formula.interval is None:
            return f"G {body}"
        lo, hi = formula.interval
        return f"G[{lo!r},{hi!r}] {body}"
    if isinstance(formula, Eventually):
        lo, hi = formula.interval
        return f"F[{lo!r},{hi!r}] ({pretty_print(formula.child)})"
    if isinstance(formula, Until):
        lo, hi = formula.interval
        return f"({pretty_print(formula.left)}) U[{lo!r},{hi!r}] ({pretty_print(formula.right)})"
    raise TypeError(f"not a formula node: {formula!r}")
