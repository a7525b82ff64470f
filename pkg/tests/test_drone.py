"""End-to-end behavior of the parachute case study."""

import math

import numpy as np
import pytest

from hdsf.condensation import condensed_drone_descent
from hdsf.drone import (ControllerVariant, DroneParams, build_full_system,
                        build_surrogate_system, conformance_check,
                        default_config_space, default_configuration,
                        emergency_deploy_decision, mean_trial_seconds, phi_for,
                        timing_comparison)
from hdsf.errors import ConfigurationError
from hdsf.falsify import generate, run_trial
from hdsf.hybrid import simulate
from hdsf.reduction import build_surrogate
from hdsf.stl import Outcome, builtin_phi


BUGGY = ControllerVariant.BUGGY
PATCHED = ControllerVariant.PATCHED


def trace_scan_violated(trace, config) -> bool:
    """Direct trace scan: an antecedent sample with no deployment inside its
    delay window (pessimistic at the trace end)."""
    thr = config["low_batt_threshold"]
    delta = config["delta"]
    battery = trace.signals["battery"]
    altitude = trace.signals["altitude"]
    deployed = trace.signals["deployed_flag"]
    window = int(math.floor(delta / trace.dt + 0.5))
    n = len(battery)
    for i in range(n):
        if battery[i] <= thr and altitude[i] > 0.5:
            j_hi = min(i + window, n - 1)
            if not (deployed[i:j_hi + 1] >= 0.5).any():
                return True
    return False


class TestDeployDecision:
    def test_buggy_blocks_outside_band(self):
        assert emergency_deploy_decision(BUGGY, 10.0, 20.0, DroneParams()) is False

    def test_patched_unconditional(self):
        assert emergency_deploy_decision(PATCHED, 10.0, 20.0, DroneParams()) is True

    def test_buggy_deploys_inside_band(self):
        assert emergency_deploy_decision(BUGGY, 10.0, 70.0, DroneParams()) is True

    def test_above_threshold_never_deploys(self):
        params = DroneParams()
        for variant in (BUGGY, PATCHED):
            assert emergency_deploy_decision(variant, 50.0, 70.0, params) is False


class TestDroneParams:
    def test_defaults_reproduce_reference_thresholds(self):
        params = DroneParams()
        assert (params.min_deploy_alt, params.max_deploy_alt,
                params.low_batt_threshold) == (60.0, 80.0, 10.0)

    def test_invalid_band_rejected(self):
        with pytest.raises(ConfigurationError):
            DroneParams(min_deploy_alt=90.0, max_deploy_alt=80.0)

    def test_negative_drain_rejected(self):
        with pytest.raises(ConfigurationError):
            DroneParams(cruise_drain=-0.1)


class TestFullSystem:
    def test_reference_scenario_violates_buggy(self):
        params = DroneParams()
        system = build_full_system(params, BUGGY).with_entry("GOTO")
        config = default_configuration(params, 10.0, 20.0)
        verdict, trace = run_trial(system, config, phi_for, params.dt, params.horizon)
        assert verdict.outcome is Outcome.VIOLATED
        assert trace.signals["deployed_flag"].max() < 0.5

    def test_reference_scenario_satisfied_patched(self):
        params = DroneParams()
        system = build_full_system(params, PATCHED).with_entry("GOTO")
        config = default_configuration(params, 10.0, 20.0)
        verdict, trace = run_trial(system, config, phi_for, params.dt, params.horizon)
        assert verdict.outcome is Outcome.SATISFIED
        assert trace.signals["deployed_flag"].max() >= 0.5

    def test_full_battery_short_mission_vacuous(self):
        params = DroneParams()
        system = build_full_system(params, BUGGY).with_entry("GOTO")
        config = default_configuration(params, 100.0, 70.0)
        verdict, _ = run_trial(system, config, phi_for, params.dt, 10.0)
        assert verdict.outcome is Outcome.SATISFIED

    def test_whole_mission_from_idle(self):
        # a near waypoint so the mission takes off, cruises, and lands
        params = DroneParams(waypoint=(40.0, 0.0, 70.0))
        system = build_full_system(params, BUGGY)
        config = default_configuration(params, 100.0, 0.0).replacing(mission_start=1.0)
        trace = simulate(system, None, config, params.dt, params.horizon)
        visited = list(dict.fromkeys(trace.modes))
        assert visited[:3] == ["IDLE", "TAKE_OFF", "GOTO"]
        assert "LAND" in visited
        assert trace.signals["altitude"].max() >= 0.95 * 70.0

    def test_mission_does_not_start_without_parameter(self):
        params = DroneParams()
        system = build_full_system(params, BUGGY)
        config = default_configuration(params, 100.0, 0.0)
        trace = simulate(system, None, config, params.dt, 5.0)
        assert set(trace.modes) == {"IDLE"}

    def test_full_trace_projection_preserves_events(self):
        from hdsf.hybrid import project_trace
        params = DroneParams()
        system = build_full_system(params, PATCHED).with_entry("GOTO")
        config = default_configuration(params, 10.0, 20.0)
        trace = simulate(system, None, config, params.dt, 10.0)
        projected = project_trace(trace, ["battery", "altitude"])
        assert projected.signal_names() == ["battery", "altitude"]
        assert projected.events == trace.events
        assert [e.guard for e in projected.events] == ["battery_critical"]


class TestSurrogateSystem:
    def test_structural_match_with_generic_reduction(self):
        params = DroneParams()
        full = build_full_system(params, BUGGY)
        phi = builtin_phi(params.delta, params.low_batt_threshold, 0.5)
        generic = build_surrogate(full, phi, entry_mode="GOTO")
        packaged = build_surrogate_system(params, BUGGY)
        a = generic.system.structure_summary()
        b = packaged.system.structure_summary()
        for key in ("modes", "signals", "guards", "initial_mode", "initials"):
            assert a[key] == b[key]

    def test_reference_config_violated_on_buggy(self):
        params = DroneParams()
        surrogate = build_surrogate_system(params, BUGGY)
        config = default_configuration(params, 10.0, 20.0)
        verdict, _ = run_trial(surrogate, config, phi_for, params.dt, params.horizon)
        assert verdict.outcome is Outcome.VIOLATED

    def test_patched_satisfied_on_sampled_configs(self):
        params = DroneParams()
        surrogate = build_surrogate_system(params, PATCHED)
        rng = np.random.default_rng(31)
        space = surrogate.parameter_space
        for _ in range(300):
            config = generate(space, rng)
            verdict, _ = run_trial(surrogate, config, phi_for, params.dt,
                                   params.horizon)
            assert verdict.outcome is Outcome.SATISFIED, config

    def test_deployment_latching(self):
        params = DroneParams()
        surrogate = build_surrogate_system(params, PATCHED)
        rng = np.random.default_rng(37)
        for _ in range(50):
            config = generate(surrogate.parameter_space, rng)
            _, trace = run_trial(surrogate, config, phi_for, params.dt,
                                 params.horizon)
            deployed = trace.signals["deployed_flag"]
            if deployed.max() >= 0.5:
                first = int(np.argmax(deployed >= 0.5))
                assert (deployed[first:] >= 0.5).all()

    def test_violation_characterization_by_trace_scan(self):
        params = DroneParams()
        surrogate = build_surrogate_system(params, BUGGY)
        rng = np.random.default_rng(41)
        for _ in range(300):
            config = generate(surrogate.parameter_space, rng)
            verdict, trace = run_trial(surrogate, config, phi_for, params.dt,
                                       params.horizon)
            assert verdict.violated == trace_scan_violated(trace, config), config


class TestConformance:
    def test_reference_config_agrees_violated(self):
        params = DroneParams()
        config = default_configuration(params, 10.0, 20.0)
        report = conformance_check(params, BUGGY, [config], params.dt, params.horizon)
        assert report.pairs[0].full is Outcome.VIOLATED
        assert report.pairs[0].surrogate is Outcome.VIOLATED
        assert report.agreement == 1.0

    @pytest.mark.parametrize("variant", [BUGGY, PATCHED])
    def test_sampled_configs_agree(self, variant):
        params = DroneParams()
        space = default_config_space(params)
        rng = np.random.default_rng(43)
        configs = [generate(space, rng) for _ in range(30)]
        report = conformance_check(params, variant, configs, params.dt,
                                   params.horizon)
        assert report.faults == []
        assert report.agreement == 1.0
        if variant is PATCHED:
            assert all(p.full is Outcome.SATISFIED for p in report.pairs)


class TestTiming:
    def test_requires_ten_configs(self):
        params = DroneParams()
        with pytest.raises(ConfigurationError, match="10"):
            timing_comparison(params, [default_configuration(params, 50, 70)],
                              params.dt, params.horizon)

    def test_self_comparison_near_unity(self):
        params = DroneParams()
        surrogate = build_surrogate_system(params, BUGGY)
        rng = np.random.default_rng(47)
        configs = [generate(surrogate.parameter_space, rng) for _ in range(15)]
        first = mean_trial_seconds(surrogate, configs, params.dt, params.horizon)
        second = mean_trial_seconds(surrogate, configs, params.dt, params.horizon)
        assert 0.25 <= first / second <= 4.0

    def test_surrogate_faster_than_full(self):
        params = DroneParams()
        space = default_config_space(params)
        rng = np.random.default_rng(53)
        configs = [generate(space, rng) for _ in range(10)]
        report = timing_comparison(params, configs, params.dt, params.horizon)
        assert report.speedup > 1.0


class TestCondensedInterplay:
    def test_surrogate_and_condensed_rates_identical_at_defaults(self):
        params = DroneParams()
        goto = condensed_drone_descent(params, "GOTO")
        state = {"altitude": 20.0, "battery": 50.0, "deployed_flag": 0.0}
        assert goto.rates["battery"].func(state, {}) == -params.cruise_drain
        parachute = condensed_drone_descent(params, "PARACHUTE")
        assert parachute.rates["altitude"].func(state, {}) == -params.descent_rate

    def test_surrogate_descends_to_ground_and_stops(self):
        params = DroneParams()
        surrogate = build_surrogate_system(params, PATCHED)
        config = default_configuration(params, 5.0, 70.0)
        _, trace = run_trial(surrogate, config, phi_for, params.dt, params.horizon)
        altitude = trace.signals["altitude"]
        assert altitude[-1] <= 0.5
        assert altitude.min() > -params.descent_rate * params.dt - 1e-12
