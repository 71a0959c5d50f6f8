import math

import numpy as np
import pytest

from acc_controller import ACC_PORT
from bench import PortSignal, TestObjectPort
from exceptions import ConfigurationError, MissingSignal, NumericalFault, PortMismatch, UnknownSignal
from scenario_model import GoalDrivenBehavior, InitialState, MovableObject, Scenery, initial_scene
from simulation import ScheduleState, derive_inputs, lead_state, run_test_case


class ScriptedObject:
    """Тестовый объект с заданной последовательностью выходов"""

    def __init__(self, values, port=ACC_PORT):
        self.port = port
        self.values = list(values)
        self.inputs = []

    def initial_outputs(self):
        return {"a_target": 0.0, "acc_active": False}

    def step(self, inputs):
        self.inputs.append(dict(inputs))
        index = len(self.inputs) - 1
        value = self.values[index] if index < len(self.values) else 0.0
        return {"a_target": value, "acc_active": True}


class IdleObject:
    """Тестовый объект, который никогда не включается"""

    port = ACC_PORT

    def initial_outputs(self):
        return {"a_target": 0.0, "acc_active": False}

    def step(self, inputs):
        return {"a_target": 0.0, "acc_active": False}


def with_adapter_port(config, port):
    elements = tuple(
        e.model_copy(update={"port": port}) if e.role == "test_object_adapter" else e for e in config.elements
    )
    return config.model_copy(update={"elements": elements})


def with_objects(case, *extra):
    objects = case.scenario.objects + tuple(extra)
    scenario = case.scenario.model_copy(
        update={"objects": objects, "initial_scene": initial_scene(case.scenario.initial_scene.scenery, objects)}
    )
    return case.model_copy(update={"scenario": scenario})


def test_closed_loop_settles_below_set_speed(baseline_trace):
    v_ego = baseline_trace.column("v_ego")
    assert len(baseline_trace) == 3001
    assert baseline_trace.valid
    assert 114 / 3.6 <= v_ego[-1] <= 120 / 3.6
    assert v_ego[0] == pytest.approx(150 / 3.6)


def test_controller_output_acts_one_step_later(baseline_trace):
    acc_active = baseline_trace.column("acc_active")
    time = baseline_trace.column("time")
    first = int(np.argmax(acc_active > 0))
    assert first == 201
    assert time[first] == pytest.approx(2.01)
    assert baseline_trace.column("v_set")[200] == pytest.approx(120 / 3.6)
    sample = baseline_trace.samples[201]
    assert sample.flags == {"acc_active": True, "acc_command": True}
    assert baseline_trace.samples[200].test_object_outputs["acc_active"] is False


def test_deceleration_includes_road_load(baseline_trace):
    a_ego = baseline_trace.column("a_ego")
    assert a_ego[:201].max() == 0.0
    # -3 m/s^2 от контроллера плюс сопротивление движению на 150 km/h
    assert a_ego[201] == pytest.approx(3.0 + 0.00015 * (150 / 3.6) ** 2 + 0.05, rel=1e-3)


def test_scene_snapshots_are_recorded(baseline_trace):
    scene = baseline_trace.samples[10].scene
    assert scene.time == pytest.approx(0.1)
    assert scene.scenery.lane_width == pytest.approx(3.75)
    assert scene.state_of("ego").speed == pytest.approx(150 / 3.6)
    assert baseline_trace.samples[10].test_object_inputs == {
        "v_ego": pytest.approx(150 / 3.6),
        "v_set": pytest.approx(120 / 3.6),
        "acc_command": False,
    }


def test_trace_without_lead_has_no_gap(baseline_trace):
    assert np.isnan(baseline_trace.column("gap")).all()
    assert np.isnan(baseline_trace.column("v_lead")).all()
    with pytest.raises(UnknownSignal):
        baseline_trace.column("yaw_rate")


def test_open_loop_keeps_scripted_motion(baseline_config, case, acc_factory):
    config = baseline_config.model_copy(update={"loop_mode": "open"})
    trace = run_test_case(config, case, acc_factory(config), record_scenes=False)
    assert np.allclose(trace.column("v_ego"), 150 / 3.6)
    assert trace.column("a_target")[-1] == -3.0
    assert trace.loop_mode == "open"
    assert trace.samples == ()


def test_runs_are_deterministic(baseline_config, case, acc_factory, baseline_trace):
    again = run_test_case(baseline_config, case, acc_factory(baseline_config), record_scenes=False)
    for name, values in baseline_trace.evaluation_data.items():
        np.testing.assert_array_equal(np.asarray(values), np.asarray(again.evaluation_data[name]))


def test_time_step_sets_sample_count(baseline_config, case, acc_factory):
    config = baseline_config.with_time_step(0.02)
    trace = run_test_case(config, case, acc_factory(config), record_scenes=False)
    assert len(trace) == 1501
    assert trace.time_step == 0.02


def test_observer_sees_every_row(baseline_config, case, acc_factory):
    rows = []

    class Recorder:
        def observe(self, row):
            rows.append(dict(row))

    trace = run_test_case(baseline_config, case, acc_factory(baseline_config), observer=Recorder(), record_scenes=False)
    assert len(rows) == len(trace)
    assert rows[-1]["v_ego"] == trace.evaluation_data["v_ego"][-1]


def test_non_finite_output_aborts_with_partial_trace(baseline_config, case):
    faulty = ScriptedObject([0.0, 0.0, 0.0, math.nan])
    with pytest.raises(NumericalFault) as info:
        run_test_case(baseline_config, case, faulty)
    trace = info.value.trace
    assert not trace.valid
    assert len(trace) == 3
    assert "step 3" in trace.fault


def test_speed_never_becomes_negative(baseline_config, case):
    braking = ScriptedObject([-9.0] * 3001)
    trace = run_test_case(baseline_config, case, braking, record_scenes=False)
    assert trace.column("v_ego").min() >= 0.0
    assert trace.column("v_ego")[-1] == pytest.approx(0.0, abs=1e-9)


def test_port_outputs_must_match_adapter(baseline_config, case):
    port = TestObjectPort(input_signals=ACC_PORT.input_signals, output_signals=ACC_PORT.output_signals[:1])
    with pytest.raises(PortMismatch, match="outputs"):
        run_test_case(baseline_config, case, ScriptedObject([], port=port))


def test_port_inputs_must_match_adapter(baseline_config, case):
    port = TestObjectPort(input_signals=ACC_PORT.input_signals[:3], output_signals=ACC_PORT.output_signals)
    with pytest.raises(PortMismatch, match="inputs"):
        run_test_case(baseline_config, case, ScriptedObject([], port=port))


def test_declared_adapter_port_replaces_acc_port(baseline_config, case):
    port = TestObjectPort(input_signals=ACC_PORT.input_signals[:3], output_signals=ACC_PORT.output_signals)
    recorder = ScriptedObject([0.0] * 3001, port=port)
    trace = run_test_case(with_adapter_port(baseline_config, port), case, recorder, record_scenes=False)
    assert trace.valid
    assert set(recorder.inputs[0]) == {"v_ego", "v_set", "acc_command"}
    with pytest.raises(PortMismatch, match="inputs"):
        run_test_case(with_adapter_port(baseline_config, port), case, ScriptedObject([]))


def test_unknown_input_signal(baseline_config, case):
    port = TestObjectPort(
        input_signals=(PortSignal(name="yaw_rate", unit="1/s"),), output_signals=ACC_PORT.output_signals
    )
    with pytest.raises(UnknownSignal):
        run_test_case(with_adapter_port(baseline_config, port), case, ScriptedObject([], port=port))


def test_required_input_must_be_available(baseline_config, case):
    port = TestObjectPort(input_signals=(PortSignal(name="gap", unit="m"),), output_signals=ACC_PORT.output_signals)
    with pytest.raises(MissingSignal):
        run_test_case(with_adapter_port(baseline_config, port), case, ScriptedObject([], port=port))

def test_goal_driven_behavior_is_refused(baseline_config, case):
    ego = case.scenario.objects[0].model_copy(update={"behavior": GoalDrivenBehavior(goal="reach_exit")})
    scenario = case.scenario.model_copy(update={"objects": (ego,)})
    with pytest.raises(ConfigurationError, match="goal-driven"):
        run_test_case(baseline_config, case.model_copy(update={"scenario": scenario}), ScriptedObject([]))


def test_configuration_needs_vehicle_dynamics(baseline_config, case):
    elements = tuple(e for e in baseline_config.elements if e.role != "vehicle_dynamics")
    with pytest.raises(ConfigurationError, match="vehicle_dynamics"):
        run_test_case(baseline_config.model_copy(update={"elements": elements}), case, ScriptedObject([]))


def test_lead_vehicle_provides_gap_inputs(baseline_config, case):
    lead = MovableObject(
        id="lead", kind="other_vehicle", initial_state=InitialState(position=60.0, lane_index=1, speed=25.0)
    )
    recorder = ScriptedObject([0.0] * 3001)
    trace = run_test_case(baseline_config, with_objects(case, lead), recorder, record_scenes=False)
    assert trace.column("gap")[0] == pytest.approx(60.0)
    assert trace.column("v_lead")[0] == pytest.approx(25.0)
    assert recorder.inputs[0]["gap"] == pytest.approx(60.0)
    assert trace.column("gap")[100] == pytest.approx(60.0 - (150 / 3.6 - 25.0) * 1.0, abs=0.5)


def test_derive_inputs_from_scene():
    ego = MovableObject(id="ego", kind="ego_vehicle", initial_state=InitialState(position=10.0, lane_index=0, speed=20.0))
    lead = MovableObject(id="lead", kind="other_vehicle", initial_state=InitialState(position=40.0, lane_index=0, speed=15.0))
    scene = initial_scene(Scenery(lane_count=1, lane_width=3.5), (ego, lead))
    inputs = derive_inputs(scene, ScheduleState(ego_id="ego", acc_command=True, set_speed=25.0), ACC_PORT)
    assert inputs == {"v_ego": 20.0, "v_set": 25.0, "acc_command": True, "gap": 30.0, "v_lead": 15.0}
    assert all(math.isnan(value) for value in lead_state(scene, "lead"))


def test_set_speed_is_visible_before_activation(baseline_trace):
    v_set = baseline_trace.column("v_set")
    assert (v_set == v_set[0]).all()
    assert v_set[0] == pytest.approx(120 / 3.6)
    assert baseline_trace.samples[0].test_object_inputs["v_set"] == pytest.approx(120 / 3.6)
    assert baseline_trace.samples[0].flags["acc_command"] is False


def test_sample_times_are_multiples_of_time_step(baseline_trace):
    dt = baseline_trace.time_step
    assert list(baseline_trace.column("time")) == [n * dt for n in range(len(baseline_trace))]


def test_speed_and_position_follow_euler_steps(baseline_trace):
    dt = baseline_trace.time_step
    states = [sample.scene.state_of("ego") for sample in baseline_trace.samples]
    v_ego = baseline_trace.column("v_ego")
    for s in range(len(states) - 1):
        assert v_ego[s + 1] == pytest.approx(v_ego[s] + states[s].acceleration * dt, rel=1e-12, abs=1e-12)
        assert states[s + 1].position == pytest.approx(states[s].position + states[s].speed * dt, rel=1e-12)
        assert baseline_trace.column("a_ego")[s] == max(0.0, -states[s].acceleration)
    travelled = states[-1].position - states[0].position
    assert travelled == pytest.approx(math.fsum(v_ego[:-1]) * dt, rel=1e-9)


def test_open_loop_matches_object_that_stays_off(baseline_config, case, acc_factory):
    config = baseline_config.model_copy(update={"loop_mode": "open"})
    open_loop = run_test_case(config, case, acc_factory(config))
    idle = run_test_case(baseline_config, case, IdleObject())
    for name in ("time", "v_ego", "a_ego"):
        np.testing.assert_array_equal(open_loop.column(name), idle.column(name))
    assert [s.scene.state_of("ego").position for s in open_loop.samples] == [
        s.scene.state_of("ego").position for s in idle.samples
    ]


def test_output_step_reaches_dynamics_one_step_later(baseline_config, case):
    k = 50
    stepped = ScriptedObject([0.0] * k + [-2.0] * (3001 - k))
    trace = run_test_case(baseline_config, case, stepped, record_scenes=False)
    a_target = trace.column("a_target")
    a_ego = trace.column("a_ego")
    assert a_target[k] == 0.0
    assert a_target[k + 1] == -2.0
    # до скачка тормозит только сопротивление движению
    assert a_ego[k] < 0.5
    assert a_ego[k + 1] - a_ego[k] == pytest.approx(2.0, abs=1e-3)
