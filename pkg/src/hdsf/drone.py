"""Drone parachute-deployment case study.

A five-mode flight controller (IDLE, TAKE_OFF, GOTO, LAND, PARACHUTE)
over an eight-signal state, with an emergency controller that must
deploy the parachute when the battery goes critical in flight.  The
buggy controller variant refuses to deploy outside a configured altitude
band, which is exactly the flaw the safety property catches; the patched
variant deploys unconditionally on critical battery.

The full model commands positions through saturated proportional
guidance toward the mission waypoint and carries first-order actuator
lag states for the velocity channels.  The lag poles (0.1 s) are why the
full model is integrated at a much finer step than the surrogate: its
default fidelity step is ``full_model_dt`` while the surrogate, whose
condensed dynamics are piecewise constant rates, is exact at the coarse
trace step.

Analysis starts mid-mission: reduction and conformance enter the system
in GOTO, which is also why IDLE and TAKE_OFF fall out of the reduced
mode set.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .condensation import SURROGATE_SIGNALS, clamped_rate, condensed_drone_descent
from .config import Configuration, ConfigSpace
from .errors import ConfigurationError, TrialFault
from .hybrid import (ContinuousDynamics, Guard, HybridSystem, ModeId, StateExpr,
                     Transition)
from .margins import AIRBORNE_MIN_ALTITUDE
from .falsify import run_trial
from .reduction import ReducedSystem, build_surrogate
from .stl import Outcome, StlFormula, builtin_phi

FULL_SIGNALS = ("x", "y", "altitude", "vx", "vy", "vz", "battery", "deployed_flag")
FULL_MODES = ("IDLE", "TAKE_OFF", "GOTO", "LAND", "PARACHUTE")

# Parameters the surrogate's search space ranges over.
SURROGATE_PARAMETERS = ("battery_init", "altitude_init", "min_deploy_alt",
                        "max_deploy_alt", "low_batt_threshold", "delta")

# Controller-internal constants (not part of the searched configuration).
MAX_SPEED = 5.0           # m/s, saturation of commanded velocities
ACTUATOR_TAU = 0.1        # s, first-order lag of the velocity channels
WAYPOINT_RADIUS = 2.0     # m, horizontal arrival tolerance
CLIMB_FRACTION = 0.98     # fraction of cruise altitude ending TAKE_OFF


class ControllerVariant(Enum):
    BUGGY = "buggy"
    PATCHED = "patched"


@dataclass(frozen=True)
class DroneParams:
    """Scenario parameters; defaults reproduce the reference run exactly."""

    min_deploy_alt: float = 60.0
    max_deploy_alt: float = 80.0
    low_batt_threshold: float = 10.0
    cruise_drain: float = 0.8        # percent/s while navigating
    hover_drain: float = 0.4         # percent/s while landing
    descent_rate: float = 3.0        # m/s under parachute
    waypoint: tuple[float, float, float] = (1000.0, 0.0, 70.0)
    pid_gains: tuple[tuple[float, float, float], ...] = (
        (0.5, 0.0, 0.0), (0.5, 0.0, 0.0), (0.8, 0.0, 0.0))
    delta: float = 2.0               # s, allowed deployment delay
    dt: float = 0.05                 # s, surrogate / trace step
    horizon: float = 120.0           # s
    full_model_dt: float = 0.005     # s, fidelity step for the full model

    def __post_init__(self):
        if not self.min_deploy_alt < self.max_deploy_alt:
            raise ConfigurationError(
                f"min_deploy_alt {self.min_deploy_alt} must be below "
                f"max_deploy_alt {self.max_deploy_alt}")
        if self.cruise_drain < 0 or self.hover_drain < 0:
            raise ConfigurationError("battery drains must be nonnegative")
        if self.descent_rate <= 0:
            raise ConfigurationError("descent_rate must be positive")
        if self.delta <= 0:
            raise ConfigurationError("delta must be positive")
        if len(self.waypoint) != 3:
            raise ConfigurationError("waypoint must be a 3-vector")
        if len(self.pid_gains) != 3:
            raise ConfigurationError("pid_gains must give (kp, ki, kd) per axis")


def _deploy_decision(variant: ControllerVariant, battery: float, altitude: float,
                     threshold: float, min_alt: float, max_alt: float) -> bool:
    if battery > threshold:
        return False
    if variant is ControllerVariant.PATCHED:
        return True
    return min_alt <= altitude <= max_alt


def emergency_deploy_decision(variant: ControllerVariant, battery: float,
                              altitude: float, params: DroneParams) -> bool:
    """Deployment decision of the emergency controller.

    Buggy: deploy only when the battery is critical AND the altitude lies
    inside the configured deployment band.  Patched: deploy whenever the
    battery is critical.
    """
    return _deploy_decision(variant, battery, altitude, params.low_batt_threshold,
                            params.min_deploy_alt, params.max_deploy_alt)


# ---------------------------------------------------------------------------
# Full five-mode model
# ---------------------------------------------------------------------------

def _saturated(command: float) -> float:
    return -MAX_SPEED if command < -MAX_SPEED else MAX_SPEED if command > MAX_SPEED else command


def _emergency_guard(variant: ControllerVariant, params: DroneParams) -> Guard:
    def predicate(s, cfg):
        return _deploy_decision(
            variant, s["battery"], s["altitude"],
            cfg["low_batt_threshold"], cfg["min_deploy_alt"], cfg["max_deploy_alt"])

    param_reads = {"low_batt_threshold"}
    if variant is ControllerVariant.BUGGY:
        param_reads |= {"min_deploy_alt", "max_deploy_alt"}
    return Guard("battery_critical", predicate,
                 reads=frozenset({"battery", "altitude"}),
                 param_reads=frozenset(param_reads))


def _parachute_reset(params: DroneParams) -> dict[str, StateExpr]:
    rate = params.descent_rate
    return {
        "deployed_flag": StateExpr(lambda s, p: 1.0),
        "vx": StateExpr(lambda s, p: 0.0),
        "vy": StateExpr(lambda s, p: 0.0),
        "vz": StateExpr(lambda s, p, r=rate: -r),
    }


def build_full_system(params: DroneParams,
                      variant: ControllerVariant = ControllerVariant.BUGGY) -> HybridSystem:
    """The full mission controller with guidance, actuator lags, and the
    emergency override."""
    wx, wy, wz = params.waypoint
    kp_x, kp_y, kp_z = (g[0] for g in params.pid_gains)
    cruise, hover = params.cruise_drain, params.hover_drain
    tau = ACTUATOR_TAU

    def vx_cmd(s):
        return _saturated(kp_x * (wx - s["x"]))

    def vy_cmd(s):
        return _saturated(kp_y * (wy - s["y"]))

    def climb_cmd(s):
        return _saturated(kp_z * (wz - s["altitude"]))

    def land_cmd(s):
        return _saturated(kp_z * (0.0 - s["altitude"]))

    cruise_battery = StateExpr(lambda s, p: clamped_rate(s["battery"], -cruise),
                               reads=frozenset({"battery"}))
    hover_battery = StateExpr(lambda s, p: clamped_rate(s["battery"], -hover),
                              reads=frozenset({"battery"}))

    def lag(cmd, vname, extra_reads=()):
        return StateExpr(lambda s, p: (cmd(s) - s[vname]) / tau,
                         reads=frozenset({vname, *extra_reads}))

    zero_cmd = lambda s: 0.0

    idle = ContinuousDynamics(FULL_SIGNALS, {})
    take_off = ContinuousDynamics(FULL_SIGNALS, {
        "altitude": StateExpr(lambda s, p: climb_cmd(s), reads=frozenset({"altitude"})),
        "vx": lag(zero_cmd, "vx"),
        "vy": lag(zero_cmd, "vy"),
        "vz": lag(climb_cmd, "vz", extra_reads=("altitude",)),
        "battery": cruise_battery,
    })
    goto = ContinuousDynamics(FULL_SIGNALS, {
        "x": StateExpr(lambda s, p: vx_cmd(s), reads=frozenset({"x"})),
        "y": StateExpr(lambda s, p: vy_cmd(s), reads=frozenset({"y"})),
        "vx": lag(vx_cmd, "vx", extra_reads=("x",)),
        "vy": lag(vy_cmd, "vy", extra_reads=("y",)),
        "vz": lag(zero_cmd, "vz"),
        "battery": cruise_battery,
    })
    land = ContinuousDynamics(FULL_SIGNALS, {
        "altitude": StateExpr(lambda s, p: clamped_rate(s["altitude"], land_cmd(s)),
                              reads=frozenset({"altitude"})),
        "vx": lag(zero_cmd, "vx"),
        "vy": lag(zero_cmd, "vy"),
        "vz": lag(land_cmd, "vz", extra_reads=("altitude",)),
        "battery": hover_battery,
    })
    parachute = ContinuousDynamics(FULL_SIGNALS, {
        "altitude": StateExpr(
            lambda s, p, r=params.descent_rate: clamped_rate(s["altitude"], -r),
            reads=frozenset({"altitude"})),
    })

    emergency = _emergency_guard(variant, params)
    mission_start = Guard(
        "mission_start",
        lambda s, cfg: cfg.get("mission_start", 0.0) >= 0.5,
        param_reads=frozenset({"mission_start"}))
    cruise_reached = Guard(
        "cruise_altitude_reached",
        lambda s, cfg: s["altitude"] >= CLIMB_FRACTION * wz,
        reads=frozenset({"altitude"}))
    waypoint_reached = Guard(
        "waypoint_reached",
        lambda s, cfg: (s["x"] - wx) ** 2 + (s["y"] - wy) ** 2 <= WAYPOINT_RADIUS ** 2,
        reads=frozenset({"x", "y"}))

    reset = _parachute_reset(params)
    return HybridSystem(
        modes=[ModeId(name, i) for i, name in enumerate(FULL_MODES)],
        dynamics={"IDLE": idle, "TAKE_OFF": take_off, "GOTO": goto,
                  "LAND": land, "PARACHUTE": parachute},
        guards={
            "IDLE": (mission_start,),
            "TAKE_OFF": (cruise_reached,),
            "GOTO": (emergency, waypoint_reached),
            "LAND": (emergency,),
            "PARACHUTE": (),
        },
        transitions={
            "IDLE": {"mission_start": Transition("TAKE_OFF")},
            "TAKE_OFF": {"cruise_altitude_reached": Transition("GOTO")},
            "GOTO": {"battery_critical": Transition("PARACHUTE", reset),
                     "waypoint_reached": Transition("LAND")},
            "LAND": {"battery_critical": Transition("PARACHUTE", reset)},
            "PARACHUTE": {},
        },
        initial_mode="IDLE",
        initials={"x": 0.0, "y": 0.0, "altitude": "altitude_init",
                  "vx": 0.0, "vy": 0.0, "vz": 0.0,
                  "battery": "battery_init", "deployed_flag": 0.0},
    )


# ---------------------------------------------------------------------------
# Surrogate and its parameter space
# ---------------------------------------------------------------------------

def default_config_space(params: DroneParams, rng_seed: int = 0) -> ConfigSpace:
    """Search bounds for the property-scoped parameters."""
    return ConfigSpace(
        bounds={
            "battery_init": (0.0, 100.0),
            "altitude_init": (0.0, 150.0),
            "min_deploy_alt": (20.0, 90.0),
            "max_deploy_alt": (40.0, 120.0),
            "low_batt_threshold": (5.0, 30.0),
            "delta": (0.5, 5.0),
        },
        orderings=(("min_deploy_alt", "max_deploy_alt"),),
        rng_seed=rng_seed,
    )


def phi_for(config: Configuration) -> StlFormula:
    """The safety property instantiated with a configuration's thresholds."""
    return builtin_phi(config["delta"], config["low_batt_threshold"],
                       AIRBORNE_MIN_ALTITUDE)


def default_configuration(params: DroneParams, battery_init: float,
                          altitude_init: float) -> Configuration:
    return Configuration({
        "battery_init": battery_init,
        "altitude_init": altitude_init,
        "min_deploy_alt": params.min_deploy_alt,
        "max_deploy_alt": params.max_deploy_alt,
        "low_batt_threshold": params.low_batt_threshold,
        "delta": params.delta,
    })


def build_surrogate_system(params: DroneParams,
                           variant: ControllerVariant = ControllerVariant.BUGGY,
                           rng_seed: int = 0) -> ReducedSystem:
    """Two-mode surrogate over (altitude, battery, deployed_flag), with the
    condensed per-mode physical dynamics and the six-parameter search space."""
    full = build_full_system(params, variant)
    phi = builtin_phi(params.delta, params.low_batt_threshold, AIRBORNE_MIN_ALTITUDE)
    condensed = {
        "GOTO": condensed_drone_descent(params, "GOTO"),
        "PARACHUTE": condensed_drone_descent(params, "PARACHUTE"),
    }
    space = default_config_space(params, rng_seed=rng_seed)
    reduced = build_surrogate(full, phi, condensed_dynamics=condensed,
                              entry_mode="GOTO", parameter_space=space)
    # the property's delay bound is a searched parameter even though the
    # formula carries it as a literal; pin the canonical six-parameter space
    reduced.parameter_space = space.restricted(SURROGATE_PARAMETERS)
    return reduced


# ---------------------------------------------------------------------------
# Conformance and timing
# ---------------------------------------------------------------------------

@dataclass
class ConformancePair:
    config: Configuration
    full: Outcome
    surrogate: Outcome

    @property
    def agree(self) -> bool:
        return self.full is self.surrogate


@dataclass
class ConformanceReport:
    pairs: list[ConformancePair]
    faults: list[tuple[Configuration, str]]

    @property
    def agreement(self) -> float:
        if not self.pairs:
            return 1.0
        return sum(p.agree for p in self.pairs) / len(self.pairs)


def conformance_check(params: DroneParams, variant: ControllerVariant,
                      configs: Sequence[Configuration], dt: float,
                      horizon: float) -> ConformanceReport:
    """Per-configuration verdict agreement between the full model (entered
    in GOTO, trace projected to the property's signals) and the surrogate.

    Configurations that fault in either system are excluded from the
    agreement denominator and reported separately.
    """
    full = build_full_system(params, variant).with_entry("GOTO")
    surrogate = build_surrogate_system(params, variant)
    projection = list(SURROGATE_SIGNALS)
    pairs = []
    faults = []
    for config in configs:
        try:
            full_verdict, _ = run_trial(full, config, phi_for, dt, horizon,
                                        project_to=projection)
            surr_verdict, _ = run_trial(surrogate, config, phi_for, dt, horizon)
        except TrialFault as exc:
            faults.append((config, str(exc)))
            continue
        pairs.append(ConformancePair(config, full_verdict.outcome, surr_verdict.outcome))
    return ConformanceReport(pairs=pairs, faults=faults)


@dataclass
class TimingReport:
    mean_full_seconds: float
    mean_surrogate_seconds: float

    @property
    def speedup(self) -> float:
        return self.mean_full_seconds / self.mean_surrogate_seconds


def mean_trial_seconds(system_like, configs: Sequence[Configuration], dt: float,
                       horizon: float) -> float:
    """Mean wall-clock time of one simulate-and-evaluate trial."""
    started = time.perf_counter()
    for config in configs:
        run_trial(system_like, config, phi_for, dt, horizon)
    return (time.perf_counter() - started) / len(configs)


def timing_comparison(params: DroneParams, configs: Sequence[Configuration],
                      dt: float, horizon: float,
                      variant: ControllerVariant = ControllerVariant.BUGGY) -> TimingReport:
    """Wall-clock comparison over identical configurations.

    The full model runs at its fidelity step (params.full_model_dt); the
    surrogate runs at the given trace step.
    """
    if len(configs) < 10:
        raise ConfigurationError("timing comparison needs at least 10 configurations")
    full = build_full_system(params, variant).with_entry("GOTO")
    surrogate = build_surrogate_system(params, variant)
    mean_full = mean_trial_seconds(full, configs, params.full_model_dt, horizon)
    mean_surr = mean_trial_seconds(surrogate, configs, dt, horizon)
    return TimingReport(mean_full_seconds=mean_full, mean_surrogate_seconds=mean_surr)
