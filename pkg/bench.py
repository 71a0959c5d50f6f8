"""
Тестовая конфигурация: тестовое окружение, стенды, конфигурации стендов
и элементы с параметрами.
"""
from collections import Counter
from typing import Any, Dict, Iterator, List, Literal, Optional, Tuple

from pydantic import Field, field_validator

from config import settings
from scenario_model import ConcreteScenario
from schemas import FrozenModel, ReportBuilder, ValidationReport
from utils import SI_UNITS, Duration, format_quantity, parse_any_quantity, si_unit, to_si, unit_dimension

ElementRole = Literal[
    "vehicle_dynamics", "lead_vehicle_model", "event_scheduler", "signal_recorder", "test_object_adapter"
]
AdapterVariant = Literal["in_process", "development_unit", "ecu"]

# Какие возможности стенда нужны элементу каждой роли
ROLE_CAPABILITIES: Dict[str, str] = {
    "vehicle_dynamics": "runs_simulation_models",
    "lead_vehicle_model": "runs_simulation_models",
    "event_scheduler": "runs_simulation_models",
    "signal_recorder": "records_signals",
}
VARIANT_CAPABILITIES: Dict[str, str] = {
    "in_process": "runs_simulation_models",
    "development_unit": "connects_development_unit",
    "ecu": "connects_ecu",
}

# Схемы параметров по ролям: имя -> (размерность, обязательный)
ROLE_PARAMETERS: Dict[str, Dict[str, Tuple[str, bool]]] = {
    "vehicle_dynamics": {
        "a_min": ("acceleration", True),
        "a_max": ("acceleration", True),
        "drag_coefficient": ("curvature", False),
        "rolling_resistance": ("acceleration", False),
    },
    "test_object_adapter": {
        "k_p": ("gain", False),
        "a_min": ("acceleration", False),
        "a_max": ("acceleration", False),
        "time_gap": ("time", False),
        "standstill_gap": ("length", False),
        "k_gap": ("gain2", False),
        "k_v": ("gain", False),
    },
    "lead_vehicle_model": {},
    "event_scheduler": {},
    "signal_recorder": {},
}


class ElementParameter(FrozenModel):
    """Значение параметра элемента в СИ; unit пустой для безразмерных"""

    value: float
    unit: str = ""

    @property
    def dimension(self) -> Optional[str]:
        return unit_dimension(self.unit) if self.unit else None


def _parameter(value: Any) -> Any:
    if isinstance(value, bool):
        raise ValueError("Boolean is not a parameter value")
    if isinstance(value, (int, float)):
        return {"value": float(value), "unit": ""}
    if isinstance(value, str):
        number, unit = parse_any_quantity(value)
        return {"value": number, "unit": unit}
    if isinstance(value, dict) and set(value) == {"value", "unit"} and value["unit"]:
        return {"value": to_si(float(value["value"]), str(value["unit"])), "unit": si_unit(str(value["unit"]))}
    return value


class TestBench(FrozenModel):
    __test__ = False

    id: str
    kind: Literal["software_in_the_loop", "hardware_in_the_loop_simulated", "vehicle_in_the_loop_simulated"]
    capabilities: Tuple[str, ...]

    @field_validator("capabilities", mode="before")
    @classmethod
    def sort_capabilities(cls, value: Any) -> Any:
        if isinstance(value, (list, tuple, set, frozenset)):
            return tuple(sorted(set(value)))
        return value


class TestEnvironment(FrozenModel):
    __test__ = False

    id: str
    description: str = ""
    benches: Tuple[TestBench, ...]

    def bench(self, bench_id: str) -> Optional[TestBench]:
        for bench in self.benches:
            if bench.id == bench_id:
                return bench
        return None


class PortSignal(FrozenModel):
    name: str
    unit: str
    optional: bool = False


class TestObjectPort(FrozenModel):
    __test__ = False

    input_signals: Tuple[PortSignal, ...]
    output_signals: Tuple[PortSignal, ...]

    @property
    def input_names(self) -> List[str]:
        return [signal.name for signal in self.input_signals]

    @property
    def output_names(self) -> List[str]:
        return [signal.name for signal in self.output_signals]


class Element(FrozenModel):
    id: str
    role: ElementRole
    parameters: Dict[str, ElementParameter] = Field(default_factory=dict)
    variant: AdapterVariant = "in_process"
    # фабрика тестового объекта: builtin_acc или module:callable
    implementation: Optional[str] = None
    # порт адаптера; без него ожидается порт встроенного ACC
    port: Optional[TestObjectPort] = None
    sub_elements: Tuple["Element", ...] = ()

    @field_validator("parameters", mode="before")
    @classmethod
    def convert_parameters(cls, value: Any) -> Any:
        if isinstance(value, dict):
            return {name: _parameter(item) for name, item in value.items()}
        return value

    def walk(self) -> Iterator["Element"]:
        yield self
        for element in self.sub_elements:
            yield from element.walk()

    def value(self, name: str, default: Optional[float] = None) -> Optional[float]:
        parameter = self.parameters.get(name)
        return parameter.value if parameter is not None else default


class TestBenchConfiguration(FrozenModel):
    __test__ = False

    id: str
    bench: str
    elements: Tuple[Element, ...]
    loop_mode: Literal["closed", "open"] = "closed"
    time_step: Duration = settings.default_time_step

    def all_elements(self) -> List[Element]:
        return [element for root in self.elements for element in root.walk()]

    def element(self, role: str) -> Optional[Element]:
        for element in self.all_elements():
            if element.role == role:
                return element
        return None

    def with_time_step(self, time_step: float) -> "TestBenchConfiguration":
        return self.model_copy(update={"time_step": time_step})


def required_capabilities(config: TestBenchConfiguration) -> List[str]:
    """Возможности стенда, которые требуют элементы конфигурации"""
    required = set()
    for element in config.all_elements():
        if element.role == "test_object_adapter":
            required.add(VARIANT_CAPABILITIES[element.variant])
        else:
            required.add(ROLE_CAPABILITIES[element.role])
    return sorted(required)


def missing_capabilities(config: TestBenchConfiguration, bench: TestBench) -> List[str]:
    return [capability for capability in required_capabilities(config) if capability not in bench.capabilities]


def match_bench(config: TestBenchConfiguration, bench: TestBench) -> bool:
    """Подходит ли стенд для конфигурации"""
    return not missing_capabilities(config, bench)


def _validate_element(builder: ReportBuilder, element: Element, path: str) -> None:
    schema = ROLE_PARAMETERS[element.role]
    for name, (dimension, required) in schema.items():
        parameter = element.parameters.get(name)
        if parameter is None:
            if required:
                builder.add(f"{path}.parameters", f"{element.role} requires parameter {name!r}")
            continue
        if parameter.dimension != dimension:
            builder.add(f"{path}.parameters.{name}", f"{name} needs a {dimension} unit (e.g. {SI_UNITS[dimension]})")

    a_min, a_max = element.value("a_min"), element.value("a_max")
    if a_min is not None and not a_min < 0:
        builder.add(f"{path}.parameters.a_min", "a_min < 0")
    if a_max is not None and not a_max > 0:
        builder.add(f"{path}.parameters.a_max", "a_max > 0")
    for name in ("drag_coefficient", "rolling_resistance", "time_gap", "standstill_gap"):
        value = element.value(name)
        if value is not None and value < 0:
            builder.add(f"{path}.parameters.{name}", f"{name} ≥ 0")
    if element.role == "test_object_adapter" and element.implementation is not None:
        implementation = element.implementation
        if implementation != "builtin_acc" and ":" not in implementation:
            builder.add(f"{path}.implementation", "implementation is 'builtin_acc' or 'module:callable'")
    if element.port is not None:
        if element.role != "test_object_adapter":
            builder.add(f"{path}.port", "only a test_object_adapter declares a port")
        for side, names in (("input_signals", element.port.input_names), ("output_signals", element.port.output_names)):
            for name, count in Counter(names).items():
                if count > 1:
                    builder.add(f"{path}.port.{side}", f"duplicate signal {name!r}")
    for i, sub in enumerate(element.sub_elements):
        _validate_element(builder, sub, f"{path}.sub_elements[{i}]")


def validate_bench_configuration(
    config: TestBenchConfiguration, scenario: Optional[ConcreteScenario] = None
) -> ValidationReport:
    """Проверяет элементы, шаг времени и наличие ролей, нужных сценарию"""
    builder = ReportBuilder()
    if not config.elements:
        builder.add("elements", "a configuration is composed of one or more elements")
    if not config.time_step > 0:
        builder.add("time_step", "time_step > 0")
    elements = config.all_elements()
    for identifier, count in Counter(e.id for e in elements).items():
        if count > 1:
            builder.add("elements", f"duplicate element id {identifier!r}")
    roles = Counter(e.role for e in elements)
    for role in ("vehicle_dynamics", "event_scheduler", "test_object_adapter"):
        if not roles[role]:
            builder.add("elements", f"required role {role} is missing")
        elif roles[role] > 1:
            builder.add("elements", f"role {role} appears {roles[role]} times")
    if scenario is not None and len(scenario.objects) > 1 and not roles["lead_vehicle_model"]:
        builder.add("elements", f"scenario {scenario.id!r} has other objects and needs a lead_vehicle_model")
    for i, element in enumerate(config.elements):
        _validate_element(builder, element, f"elements[{i}]")
    return builder.build()


def validate_environment(environment: TestEnvironment) -> ValidationReport:
    builder = ReportBuilder()
    if not environment.benches:
        builder.add("benches", "a test environment contains one or more test benches")
    for identifier, count in Counter(b.id for b in environment.benches).items():
        if count > 1:
            builder.add("benches", f"duplicate bench id {identifier!r}")
    for i, bench in enumerate(environment.benches):
        if not bench.capabilities:
            builder.add(f"benches[{i}].capabilities", "capability set non-empty")
    return builder.build()


def describe_parameters(element: Element) -> Dict[str, str]:
    """Параметры элемента в читаемом виде для отчетов и логов"""
    described = {}
    for name, parameter in element.parameters.items():
        if parameter.unit:
            described[name] = format_quantity(parameter.value, unit_dimension(parameter.unit))
        else:
            described[name] = repr(parameter.value)
    return described
