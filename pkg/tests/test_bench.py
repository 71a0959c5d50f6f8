import pytest

from bench import (
    Element,
    PortSignal,
    TestBench,
    TestObjectPort,
    match_bench,
    missing_capabilities,
    required_capabilities,
    validate_bench_configuration,
    validate_environment,
)
from loader import load_environment
from scenario_model import InitialState, MovableObject


@pytest.fixture(scope="module")
def environment(bundle_dir):
    return load_environment(bundle_dir / "environment.yaml")


def with_adapter(config, **changes):
    elements = tuple(e.model_copy(update=changes) if e.role == "test_object_adapter" else e for e in config.elements)
    return config.model_copy(update={"elements": elements})


def without_role(config, role):
    return config.model_copy(update={"elements": tuple(e for e in config.elements if e.role != role)})


def test_bundle_environment_and_configurations_are_valid(environment, baseline_config, aggressive_config):
    assert validate_environment(environment).is_empty
    assert validate_bench_configuration(baseline_config).is_empty
    assert validate_bench_configuration(aggressive_config).is_empty


def test_element_parameters_are_parsed_with_units(baseline_config):
    adapter = baseline_config.element("test_object_adapter")
    assert adapter.parameters["k_p"].value == 2.0
    assert adapter.parameters["k_p"].unit == "1/s"
    assert adapter.value("a_min") == -3.0
    assert adapter.value("standstill_gap", 5.0) == 5.0
    assert baseline_config.time_step == pytest.approx(0.01)


def test_speed_parameter_is_stored_in_si():
    element = Element(id="lead", role="lead_vehicle_model", parameters={"speed": "72 km/h"})
    assert element.parameters["speed"].value == pytest.approx(20.0)
    assert element.parameters["speed"].unit == "m/s"


def test_sil_bench_matches_in_process_configuration(environment, baseline_config):
    assert required_capabilities(baseline_config) == ["records_signals", "runs_simulation_models"]
    assert match_bench(baseline_config, environment.bench("sil-bench"))
    assert match_bench(baseline_config, environment.bench("hil-bench"))


def test_ecu_adapter_needs_hil_bench(environment, baseline_config):
    ecu = with_adapter(baseline_config, variant="ecu")
    assert missing_capabilities(ecu, environment.bench("sil-bench")) == ["connects_ecu"]
    assert not match_bench(ecu, environment.bench("sil-bench"))
    assert match_bench(ecu, environment.bench("hil-bench"))


def test_bench_without_capabilities_matches_nothing(baseline_config):
    assert not match_bench(baseline_config, TestBench(id="empty", kind="software_in_the_loop", capabilities=()))


def test_missing_required_role_is_reported(baseline_config):
    report = validate_bench_configuration(without_role(baseline_config, "vehicle_dynamics"))
    assert "elements: required role vehicle_dynamics is missing" in report.messages()


def test_positive_deceleration_limit_is_reported(baseline_config):
    dynamics = baseline_config.elements[0]
    parameters = dict(dynamics.parameters)
    parameters["a_min"] = parameters["a_min"].model_copy(update={"value": 1.0})
    elements = (dynamics.model_copy(update={"parameters": parameters}),) + baseline_config.elements[1:]
    report = validate_bench_configuration(baseline_config.model_copy(update={"elements": elements}))
    assert "elements[0].parameters.a_min: a_min < 0" in report.messages()


def test_parameter_with_wrong_unit_is_reported(baseline_config):
    broken = Element(id="acc-adapter", role="test_object_adapter", parameters={"k_p": "2.0 m"})
    elements = baseline_config.elements[:3] + (broken,)
    report = validate_bench_configuration(baseline_config.model_copy(update={"elements": elements}))
    assert "elements[3].parameters.k_p: k_p needs a gain unit (e.g. 1/s)" in report.messages()


def test_bad_implementation_reference_is_reported(baseline_config):
    report = validate_bench_configuration(with_adapter(baseline_config, implementation="my_controller"))
    assert "elements[3].implementation: implementation is 'builtin_acc' or 'module:callable'" in report.messages()


def test_scenario_with_other_objects_needs_lead_model(baseline_config, concrete):
    lead = MovableObject(id="lead", kind="other_vehicle", initial_state=InitialState(position=80.0, lane_index=1, speed=30.0))
    scenario = concrete.model_copy(update={"objects": concrete.objects + (lead,)})
    report = validate_bench_configuration(baseline_config, scenario)
    assert any("needs a lead_vehicle_model" in message for message in report.messages())
    assert validate_bench_configuration(baseline_config, concrete).is_empty


def test_duplicate_bench_ids_are_reported(environment):
    doubled = environment.model_copy(update={"benches": environment.benches + environment.benches[:1]})
    assert "benches: duplicate bench id 'sil-bench'" in validate_environment(doubled).messages()


def test_adapter_port_with_duplicate_signal_is_reported(baseline_config):
    port = TestObjectPort(
        input_signals=(PortSignal(name="v_ego", unit="m/s"), PortSignal(name="v_ego", unit="m/s")),
        output_signals=(PortSignal(name="a_target", unit="m/s^2"),),
    )
    report = validate_bench_configuration(with_adapter(baseline_config, port=port))
    assert "elements[3].port.input_signals: duplicate signal 'v_ego'" in report.messages()


def test_only_adapter_declares_port(baseline_config):
    port = TestObjectPort(input_signals=(), output_signals=())
    elements = tuple(
        e.model_copy(update={"port": port}) if e.role == "vehicle_dynamics" else e for e in baseline_config.elements
    )
    report = validate_bench_configuration(baseline_config.model_copy(update={"elements": elements}))
    assert any(message.endswith(".port: only a test_object_adapter declares a port") for message in report.messages())
