"""Configurations and the constrained parameter spaces they are drawn from.

A configuration is an immutable mapping of named real parameters; a
configuration space gives closed bounds per parameter plus strict
ordering constraints between parameter pairs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterator, Mapping

from .errors import ConfigurationError, MissingParameterError, SpaceError


class Configuration(Mapping[str, float]):
    """Immutable named real-valued parameter vector."""

    __slots__ = ("_values",)

    def __init__(self, values: Mapping[str, float]):
        clean = {}
        for name, value in values.items():
            v = float(value)
            if not math.isfinite(v):
                raise ConfigurationError(f"parameter {name!r} is not finite: {value!r}")
            clean[name] = v
        object.__setattr__(self, "_values", clean)

    def __getitem__(self, name: str) -> float:
        try:
            return self._values[name]
        except KeyError:
            raise MissingParameterError(
                f"configuration has no parameter {name!r}; "
                f"available: {sorted(self._values)}") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __setattr__(self, name, value):
        raise AttributeError("Configuration is immutable")

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v!r}" for k, v in sorted(self._values.items()))
        return f"Configuration({inner})"

    def __eq__(self, other) -> bool:
        if isinstance(other, Configuration):
            return self._values == other._values
        return NotImplemented

    def __hash__(self):
        return hash(tuple(sorted(self._values.items())))

    def replacing(self, **updates: float) -> "Configuration":
        merged = dict(self._values)
        merged.update(updates)
        return Configuration(merged)

    def as_dict(self) -> dict[str, float]:
        return dict(self._values)

    def to_json(self) -> str:
        return json.dumps(self._values, sort_keys=True)


@dataclass(frozen=True)
class ConfigSpace:
    """Closed per-parameter bounds plus strict ordering constraints.

    ``orderings`` lists (low, high) parameter-name pairs that every
    configuration must satisfy as low < high.  The constraint graph must
    be acyclic and the feasible region nonempty.
    """

    bounds: Mapping[str, tuple[float, float]]
    orderings: tuple[tuple[str, str], ...] = ()
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bounds",
                           {k: (float(lo), float(hi)) for k, (lo, hi) in self.bounds.items()})
        for name, (lo, hi) in self.bounds.items():
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise SpaceError(f"parameter {name!r} has empty or unbounded interval [{lo}, {hi}]")
        for a, b in self.orderings:
            if a not in self.bounds or b not in self.bounds:
                raise SpaceError(f"ordering {a} < {b} references unknown parameters")
        self._check_acyclic()
        self._check_feasible()

    def _check_acyclic(self):
        succ: dict[str, list[str]] = {}
        for a, b in self.orderings:
            succ.setdefault(a, []).append(b)
        state: dict[str, int] = {}

        def visit(node):
            state[node] = 1
            for nxt in succ.get(node, []):
                if state.get(nxt) == 1:
                    raise SpaceError(f"ordering constraints contain a cycle through {nxt!r}")
                if state.get(nxt) is None:
                    visit(nxt)
            state[node] = 2

        for node in list(succ):
            if state.get(node) is None:
                visit(node)

    def _check_feasible(self):
        # tighten effective upper bounds along the ordering DAG; a strict
        # chain a < b is feasible iff lo_a < effective hi with nonzero width
        for a, b in self.orderings:
            lo_a, _ = self.bounds[a]
            _, hi_b = self.bounds[b]
            if not lo_a < hi_b:
                raise SpaceError(
                    f"constraint {a} < {b} infeasible: [{self.bounds[a]}] vs [{self.bounds[b]}]")

    @property
    def names(self) -> list[str]:
        return list(self.bounds)

    def contains(self, config: Configuration) -> bool:
        for name, (lo, hi) in self.bounds.items():
            if name not in config:
                return False
            if not (lo <= config[name] <= hi):
                return False
        return all(config[a] < config[b] for a, b in self.orderings)

    def restricted(self, names) -> "ConfigSpace":
        """Sub-space over the given parameter names."""
        keep = set(names)
        return ConfigSpace(
            bounds={k: v for k, v in self.bounds.items() if k in keep},
            orderings=tuple((a, b) for a, b in self.orderings if a in keep and b in keep),
            rng_seed=self.rng_seed,
        )

    @classmethod
    def from_json(cls, text: str) -> "ConfigSpace":
        data = json.loads(text)
        return cls(
            bounds={k: tuple(v) for k, v in data["bounds"].items()},
            orderings=tuple(tuple(pair) for pair in data.get("orderings", [])),
            rng_seed=int(data.get("rng_seed", 0)),
        )

    def to_json(self) -> str:
        return json.dumps({
            "bounds": {k: list(v) for k, v in self.bounds.items()},
            "orderings": [list(p) for p in self.orderings],
            "rng_seed": self.rng_seed,
        }, sort_keys=True, indent=2)
