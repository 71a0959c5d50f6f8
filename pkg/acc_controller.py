"""
Тестовый объект: встроенный ACC-контроллер и загрузка пользовательских
реализаций через адаптер тестового объекта.
"""
import importlib
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Mapping, Optional, Protocol

from pydantic import model_validator

from bench import Element, PortSignal, TestObjectPort, describe_parameters
from config import settings
from exceptions import ConfigurationError
from schemas import FrozenModel

logger = logging.getLogger(__name__)

ACC_PORT = TestObjectPort(
    input_signals=(
        PortSignal(name="v_ego", unit="m/s"),
        PortSignal(name="v_set", unit="m/s"),
        PortSignal(name="acc_command", unit="flag"),
        PortSignal(name="gap", unit="m", optional=True),
        PortSignal(name="v_lead", unit="m/s", optional=True),
    ),
    output_signals=(
        PortSignal(name="a_target", unit="m/s^2"),
        PortSignal(name="acc_active", unit="flag"),
    ),
)


class TestObject(Protocol):
    """Тестовый объект: получает входы в t_s, выдает выходы, доступные в t_{s+1}"""

    port: TestObjectPort

    def initial_outputs(self) -> Dict[str, Any]:
        ...

    def step(self, inputs: Mapping[str, Any]) -> Dict[str, Any]:
        ...


class AccParameters(FrozenModel):
    k_p: float = settings.acc_k_p
    a_min: float = settings.acc_a_min
    a_max: float = settings.acc_a_max
    time_gap: float = settings.acc_time_gap
    standstill_gap: float = settings.acc_standstill_gap
    k_gap: float = settings.acc_k_gap
    k_v: float = settings.acc_k_v

    @model_validator(mode="after")
    def check_limits(self) -> "AccParameters":
        if not self.a_min < 0 < self.a_max:
            raise ValueError("ACC parameters need a_min < 0 < a_max")
        return self

    @classmethod
    def from_element(cls, element: Element) -> "AccParameters":
        values = {name: element.value(name) for name in cls.model_fields if name in element.parameters}
        return cls(**values)


@dataclass
class AccState:
    active: bool = False
    activations: int = 0


def _present(value: Any) -> bool:
    return value is not None and math.isfinite(value)


def builtin_acc_step(inputs: Mapping[str, Any], state: AccState, params: AccParameters) -> Dict[str, Any]:
    """Один шаг ACC: регулирование скорости, при наличии лидера ограничение по дистанции"""
    active = bool(inputs.get("acc_command"))
    if active and not state.active:
        state.activations += 1
    state.active = active
    if not active:
        return {"a_target": 0.0, "acc_active": False}

    v_ego = inputs["v_ego"]
    a_target = params.k_p * (inputs["v_set"] - v_ego)
    gap, v_lead = inputs.get("gap"), inputs.get("v_lead")
    if _present(gap) and _present(v_lead):
        desired_gap = params.standstill_gap + params.time_gap * v_ego
        following = params.k_gap * (gap - desired_gap) + params.k_v * (v_lead - v_ego)
        a_target = min(a_target, following)
    return {"a_target": min(max(a_target, params.a_min), params.a_max), "acc_active": True}


class BuiltinAcc:
    """Встроенный ACC-контроллер как тестовый объект"""

    port = ACC_PORT

    def __init__(self, params: Optional[AccParameters] = None):
        self.params = params or AccParameters()
        self.state = AccState()

    def initial_outputs(self) -> Dict[str, Any]:
        return {"a_target": 0.0, "acc_active": False}

    def step(self, inputs: Mapping[str, Any]) -> Dict[str, Any]:
        return builtin_acc_step(inputs, self.state, self.params)


def _resolve(reference: str) -> Callable[..., Any]:
    module_name, _, attribute = reference.partition(":")
    try:
        module = importlib.import_module(module_name)
        return getattr(module, attribute)
    except (ImportError, AttributeError) as e:
        raise ConfigurationError(f"Cannot load test object {reference!r}: {e}") from e


def load_test_object(element: Element) -> TestObject:
    """Создает тестовый объект, к которому подключен адаптер"""
    if element.role != "test_object_adapter":
        raise ConfigurationError(f"Element {element.id!r} is not a test object adapter")
    implementation = element.implementation or "builtin_acc"
    if implementation == "builtin_acc":
        try:
            params = AccParameters.from_element(element)
        except ValueError as e:
            raise ConfigurationError(f"Element {element.id!r}: {e}") from e
        logger.debug(f"Built-in ACC for {element.id}: {describe_parameters(element)}")
        return BuiltinAcc(params)
    factory = _resolve(implementation)
    parameters = {name: parameter.value for name, parameter in element.parameters.items()}
    logger.info(f"[INFO] Test object {implementation} ({element.variant}) for {element.id}")
    return factory(**parameters)
