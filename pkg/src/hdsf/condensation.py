"""Static condensation of discretized linear systems.

Reduces a dense linear system K U = F to its interface degrees of
freedom by eliminating the internal block through the Schur complement:

    K~ = K_pp - K_pi K_ii^-1 K_ip
    F~ = F_p  - K_pi K_ii^-1 F_i
    U_i = K_ii^-1 (F_i - K_ip U_p)

The internal-block factorization is computed once and reused for both
the condensation and the reconstruction of internal state.  Storage is
dense and solves are direct; the systems this package condenses are
small by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Mapping, Optional

import numpy as np
import scipy.linalg

from .errors import CondensationError, ConfigurationError, SolveError
from .hybrid import ContinuousDynamics, StateExpr

if TYPE_CHECKING:
    from .drone import DroneParams


@dataclass
class LinearSystem:
    """Dense system K U = F, optionally assembled from a parameter vector."""

    K: np.ndarray
    F: np.ndarray
    parameter_hook: Optional[Callable[[Mapping[str, float]], tuple[np.ndarray, np.ndarray]]] = None

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        if self.K.ndim != 2 or self.K.shape[0] != self.K.shape[1]:
            raise ConfigurationError(f"K must be square, got shape {self.K.shape}")
        if self.F.shape != (self.K.shape[0],):
            raise ConfigurationError(
                f"F has shape {self.F.shape}, expected ({self.K.shape[0]},)")
        if self.K.shape[0] < 1:
            raise ConfigurationError("system must have at least one unknown")

    @property
    def size(self) -> int:
        return self.K.shape[0]

    def assemble(self, parameters: Mapping[str, float]) -> "LinearSystem":
        """Re-assemble (K, F) for a parameter vector via the hook."""
        if self.parameter_hook is None:
            return self
        K, F = self.parameter_hook(parameters)
        return LinearSystem(K, F, parameter_hook=self.parameter_hook)


@dataclass(frozen=True)
class Partition:
    """Split of 0..N-1 into interface (p) and internal (i) index lists."""

    interface_indices: tuple[int, ...]
    internal_indices: tuple[int, ...]

    def __post_init__(self):
        p, i = set(self.interface_indices), set(self.internal_indices)
        if len(p) != len(self.interface_indices) or len(i) != len(self.internal_indices):
            raise ConfigurationError("partition contains repeated indices")
        if p & i:
            raise ConfigurationError(f"partition groups overlap: {sorted(p & i)}")
        n = len(p) + len(i)
        if (p | i) != set(range(n)):
            raise ConfigurationError("partition must cover 0..N-1 exactly")

    @property
    def size(self) -> int:
        return len(self.interface_indices) + len(self.internal_indices)


@dataclass
class CondensedSystem:
    """Interface-reduced operators plus the reusable internal factorization."""

    k_tilde: np.ndarray
    f_tilde: np.ndarray
    partition: Partition
    internal_factorization: Optional[tuple] = None

    @property
    def interface_size(self) -> int:
        return len(self.partition.interface_indices)


def condense(system: LinearSystem, partition: Partition,
             cond_threshold: float = 1e12) -> CondensedSystem:
    """Eliminate the internal block of ``system`` under ``partition``.

    Raises CondensationError when the internal block is singular or its
    condition estimate exceeds ``cond_threshold``.
    """
    if partition.size != system.size:
        raise ConfigurationError(
            f"partition covers {partition.size} dofs, system has {system.size}")
    p = list(partition.interface_indices)
    i = list(partition.internal_indices)
    if not i:
        return CondensedSystem(system.K[np.ix_(p, p)].copy(), system.F[p].copy(), partition)

    K_pp = system.K[np.ix_(p, p)]
    K_pi = system.K[np.ix_(p, i)]
    K_ip = system.K[np.ix_(i, p)]
    K_ii = system.K[np.ix_(i, i)]
    cond = np.linalg.cond(K_ii)
    if not np.isfinite(cond) or cond > cond_threshold:
        raise CondensationError(
            f"internal block K_ii ({len(i)}x{len(i)}) is singular or ill-conditioned "
            f"(condition estimate {cond:.3e} > {cond_threshold:.3e})")
    lu = scipy.linalg.lu_factor(K_ii)
    k_tilde = K_pp - K_pi @ scipy.linalg.lu_solve(lu, K_ip)
    f_tilde = system.F[p] - K_pi @ scipy.linalg.lu_solve(lu, system.F[i])
    return CondensedSystem(k_tilde, f_tilde, partition, internal_factorization=lu)


def solve_condensed(cs: CondensedSystem) -> np.ndarray:
    """Solve K~ U_p = F~ for the interface unknowns."""
    if cs.interface_size == 0:
        return np.zeros(0)
    try:
        u_p = np.linalg.solve(cs.k_tilde, cs.f_tilde)
    except np.linalg.LinAlgError as exc:
        raise SolveError(f"condensed interface matrix is singular: {exc}") from exc
    residual = np.linalg.norm(cs.k_tilde @ u_p - cs.f_tilde)
    bound = 1e-10 * (1.0 + np.linalg.norm(cs.f_tilde))
    if residual > bound:
        raise SolveError(
            f"condensed solve residual {residual:.3e} exceeds bound {bound:.3e}")
    return u_p


def reconstruct_internal(cs: CondensedSystem, system: LinearSystem,
                         u_p: np.ndarray) -> np.ndarray:
    """Recover the internal unknowns from the interface solution."""
    p = list(cs.partition.interface_indices)
    i = list(cs.partition.internal_indices)
    if len(u_p) != len(p):
        raise ConfigurationError(
            f"interface vector has {len(u_p)} entries, expected {len(p)}")
    if not i:
        return np.zeros(0)
    K_ip = system.K[np.ix_(i, p)]
    return scipy.linalg.lu_solve(cs.internal_factorization, system.F[i] - K_ip @ u_p)


def reassemble(partition: Partition, u_p: np.ndarray, u_i: np.ndarray) -> np.ndarray:
    """Merge interface and internal solutions back into original index order."""
    full = np.zeros(partition.size)
    full[list(partition.interface_indices)] = u_p
    full[list(partition.internal_indices)] = u_i
    return full


# ---------------------------------------------------------------------------
# Plain-text dense matrix I/O (test fixtures)
# ---------------------------------------------------------------------------

def save_matrix(path, matrix: np.ndarray) -> None:
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w") as fh:
        fh.write(f"{m.shape[0]} {m.shape[1]}\n")
        for row in m:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_matrix(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        rows, cols = int(header[0]), int(header[1])
        data = [float(tok) for line in fh for tok in line.split()]
    if len(data) != rows * cols:
        raise ConfigurationError(
            f"matrix file {path} declares {rows}x{cols} but holds {len(data)} entries")
    return np.array(data).reshape(rows, cols)


def load_vector(path) -> np.ndarray:
    m = load_matrix(path)
    if m.shape[1] != 1:
        raise ConfigurationError(f"vector file {path} has {m.shape[1]} columns")
    return m[:, 0]


# ---------------------------------------------------------------------------
# Condensed drone descent dynamics
# ---------------------------------------------------------------------------

# Steady-state block model coupling the (battery rate, altitude rate)
# interface to two internal states (motor thermal deviation, ESC load
# deviation).  Couplings and internal stiffness are powers of two so the
# Schur path introduces no avoidable rounding.
_COUPLING = 0.25
_INTERNAL_STIFFNESS = 2.0

# Surrogate signal order mirrors the full drone model's declaration order
# restricted to the property-relevant signals.
SURROGATE_SIGNALS = ("altitude", "battery", "deployed_flag")


def drone_block_system(mode: str, params: "DroneParams") -> LinearSystem:
    """Per-mode linear block model whose interface solution is the
    (battery rate, altitude rate) pair for that mode."""
    if mode == "GOTO":
        target = np.array([-params.cruise_drain, 0.0, 0.0, 0.0])
    elif mode == "PARACHUTE":
        target = np.array([0.0, -params.descent_rate, 0.0, 0.0])
    else:
        raise ConfigurationError(f"no block model for mode {mode!r}")
    c, d = _COUPLING, _INTERNAL_STIFFNESS
    K = np.array([
        [1.0, 0.0, c, 0.0],
        [0.0, 1.0, 0.0, c],
        [c, 0.0, d, 0.0],
        [0.0, c, 0.0, d],
    ])
    return LinearSystem(K, K @ target)


DRONE_INTERFACE_PARTITION = Partition(interface_indices=(0, 1),
                                      internal_indices=(2, 3))


def clamped_rate(level: float, rate: float) -> float:
    """Cut a draining rate to zero once its level is exhausted.

    Shared by the condensed surrogate dynamics and the full drone model so
    both sides integrate identically.
    """
    return rate if level > 0.0 else (rate if rate > 0.0 else 0.0)


def condensed_drone_descent(params: "DroneParams", mode: str = "PARACHUTE") -> ContinuousDynamics:
    """Two-variable (battery, altitude) dynamics for one surrogate mode,
    obtained by condensing the block physical model onto the interface.

    Battery stops draining at empty; altitude stops falling at ground.
    """
    cs = condense(drone_block_system(mode, params), DRONE_INTERFACE_PARTITION)
    battery_rate, altitude_rate = (float(v) for v in solve_condensed(cs))
    rates = {
        "battery": StateExpr(
            lambda s, p, r=battery_rate: clamped_rate(s["battery"], r),
            reads=frozenset({"battery"})),
        "altitude": StateExpr(
            lambda s, p, r=altitude_rate: clamped_rate(s["altitude"], r),
            reads=frozenset({"altitude"})),
    }
    return ContinuousDynamics(SURROGATE_SIGNALS, rates)
