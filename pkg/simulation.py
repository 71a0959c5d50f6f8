"""
Исполнение тестовых случаев: детерминированная симуляция с фиксированным
шагом (прямой метод Эйлера) в замкнутом или разомкнутом контуре.

Шаг s: события -> сцена(t_s) -> входы(t_s) -> тестовый объект -> выходы,
доступные в t_{s+1} и действующие на динамику в [t_{s+1}, t_{s+2}).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Mapping, Optional, Protocol, Sequence, Tuple

import numpy as np

from acc_controller import ACC_PORT, TestObject
from bench import TestBenchConfiguration, TestObjectPort
from exceptions import ConfigurationError, MissingSignal, NumericalFault, PortMismatch, UnknownSignal
from scenario_model import (
    ActivateAcc,
    DeactivateAcc,
    GoalDrivenBehavior,
    MovableObject,
    ObjectState,
    Scene,
    ScriptedBehavior,
    SetAcceleration,
    compute_relationships,
)
from schemas import TRACE_COLUMNS, FrozenModel
from specification import TestCase
from utils import sample_count, step_index

logger = logging.getLogger(__name__)

# Сигналы, которые движок умеет получать из сцены и расписания событий
DERIVABLE_SIGNALS = {"v_ego", "v_set", "acc_command", "gap", "v_lead"}


class TraceSample(FrozenModel):
    time: float
    scene: Scene
    test_object_inputs: Dict[str, Any]
    test_object_outputs: Dict[str, Any]
    flags: Dict[str, bool]


class ExecutionTrace(FrozenModel):
    scenario_id: str
    case_id: str
    config_id: str
    time_step: float
    loop_mode: Literal["closed", "open"]
    valid: bool = True
    fault: Optional[str] = None
    samples: Tuple[TraceSample, ...] = ()
    # данные оценки тестового случая по колонкам TRACE_COLUMNS
    evaluation_data: Dict[str, Tuple[float, ...]]

    def __len__(self) -> int:
        return len(self.evaluation_data.get("time", ()))

    def column(self, name: str) -> np.ndarray:
        if name not in self.evaluation_data:
            raise UnknownSignal(name)
        return np.asarray(self.evaluation_data[name], dtype=float)

    def rows(self) -> List[Dict[str, float]]:
        names = list(self.evaluation_data)
        return [dict(zip(names, values)) for values in zip(*(self.evaluation_data[n] for n in names))]


class SampleObserver(Protocol):
    """Получает каждую строку данных оценки во время прогона"""

    def observe(self, row: Mapping[str, float]) -> None:
        ...


@dataclass
class ScheduleState:
    ego_id: str
    acc_command: bool = False
    set_speed: float = 0.0
    overrides: Dict[str, float] = field(default_factory=dict)


@dataclass
class VehicleDynamics:
    a_min: float
    a_max: float
    drag_coefficient: float = 0.0
    rolling_resistance: float = 0.0

    def road_load(self, speed: float) -> float:
        if speed <= 0:
            return 0.0
        return self.drag_coefficient * speed * speed + self.rolling_resistance


def derive_inputs(scene: Scene, schedule: ScheduleState, port: TestObjectPort) -> Dict[str, Any]:
    """Входы тестового объекта из сцены t_s и состояния расписания"""
    gap, v_lead = lead_state(scene, schedule.ego_id)
    available: Dict[str, Any] = {
        "v_ego": scene.state_of(schedule.ego_id).speed,
        "v_set": schedule.set_speed,
        "acc_command": schedule.acc_command,
    }
    if math.isfinite(gap):
        available["gap"] = gap
        available["v_lead"] = v_lead

    inputs: Dict[str, Any] = {}
    for signal in port.input_signals:
        if signal.name not in DERIVABLE_SIGNALS:
            raise UnknownSignal(signal.name)
        if signal.name in available:
            inputs[signal.name] = available[signal.name]
        elif not signal.optional:
            raise MissingSignal(f"Signal {signal.name!r} is not available in scene at t={scene.time!r}")
    return inputs


def adapter_port(config: TestBenchConfiguration) -> TestObjectPort:
    """Порт, объявленный адаптером тестового объекта (по умолчанию порт ACC)"""
    adapter = config.element("test_object_adapter")
    if adapter is None or adapter.port is None:
        return ACC_PORT
    return adapter.port


def _check_port(test_object: TestObject, expected: TestObjectPort) -> None:
    port = getattr(test_object, "port", None)
    if port is None:
        raise PortMismatch("Test object declares no port")
    for side, actual, wanted in (
        ("inputs", port.input_names, expected.input_names),
        ("outputs", port.output_names, expected.output_names),
    ):
        if set(actual) != set(wanted):
            raise PortMismatch(f"Test object {side} {sorted(actual)} do not match adapter {side} {sorted(wanted)}")


def announced_set_speed(events: Sequence[Any]) -> float:
    """Уставка первого включения ACC; до включения она уже видна на входе v_set"""
    for event in events:
        if isinstance(event.effect, ActivateAcc):
            return event.effect.set_speed
    return 0.0


def _dynamics(config: TestBenchConfiguration) -> VehicleDynamics:
    element = config.element("vehicle_dynamics")
    if element is None:
        raise ConfigurationError(f"Configuration {config.id!r} has no vehicle_dynamics element")
    if config.element("event_scheduler") is None:
        raise ConfigurationError(f"Configuration {config.id!r} has no event_scheduler element")
    dynamics = VehicleDynamics(
        a_min=element.value("a_min"),
        a_max=element.value("a_max"),
        drag_coefficient=element.value("drag_coefficient", 0.0),
        rolling_resistance=element.value("rolling_resistance", 0.0),
    )
    if dynamics.a_min is None or dynamics.a_max is None or not dynamics.a_min < 0 < dynamics.a_max:
        raise ConfigurationError(f"vehicle_dynamics in {config.id!r} needs a_min < 0 < a_max")
    return dynamics


def _behavior_acceleration(obj: MovableObject, schedule: ScheduleState, time: float) -> float:
    if obj.id in schedule.overrides:
        return schedule.overrides[obj.id]
    if isinstance(obj.behavior, ScriptedBehavior):
        return obj.behavior.acceleration_at(time)
    return 0.0


def _finite(values: Sequence[float]) -> bool:
    return all(math.isfinite(v) for v in values)


def run_test_case(
    config: TestBenchConfiguration,
    case: TestCase,
    test_object: TestObject,
    observer: Optional[SampleObserver] = None,
    record_scenes: bool = True,
) -> ExecutionTrace:
    """Выполняет тестовый случай на конфигурации стенда"""
    scenario = case.scenario
    ego = scenario.ego()
    if ego is None:
        raise ConfigurationError(f"Scenario {scenario.id!r} needs exactly one ego vehicle")
    for obj in scenario.objects:
        if isinstance(obj.behavior, GoalDrivenBehavior):
            raise ConfigurationError(f"Object {obj.id!r}: goal-driven behavior is not supported by the engine")
    _check_port(test_object, adapter_port(config))
    dynamics = _dynamics(config)

    dt = config.time_step
    count = sample_count(scenario.duration, dt)
    events = sorted(
        enumerate(scenario.events), key=lambda item: (step_index(item[1].trigger_time, dt), item[0])
    )
    pending = [(step_index(event.trigger_time, dt), event) for _, event in events]

    scenery = scenario.initial_scene.scenery
    self_representations = scenario.initial_scene.self_representations
    observer_id = scenario.initial_scene.observer
    initial = {state.object_id: state for state in scenario.initial_scene.movable_object_states}
    positions = {obj.id: initial[obj.id].position for obj in scenario.objects}
    speeds = {obj.id: initial[obj.id].speed for obj in scenario.objects}
    schedule = ScheduleState(ego_id=ego.id, set_speed=announced_set_speed([event for _, event in pending]))

    available = dict(test_object.initial_outputs())
    columns: Dict[str, List[float]] = {name: [] for name in TRACE_COLUMNS}
    samples: List[TraceSample] = []

    def build_trace(valid: bool, fault: Optional[str]) -> ExecutionTrace:
        return ExecutionTrace(
            scenario_id=scenario.id,
            case_id=case.id,
            config_id=config.id,
            time_step=dt,
            loop_mode=config.loop_mode,
            valid=valid,
            fault=fault,
            samples=tuple(samples),
            evaluation_data={name: tuple(values) for name, values in columns.items()},
        )

    logger.info(f"[INFO] Running {case.id} on {config.id} ({config.loop_mode} loop, dt={dt!r} s, {count} samples)")
    for i in range(count):
        time = i * dt
        while pending and pending[0][0] <= i:
            _, event = pending.pop(0)
            effect = event.effect
            if isinstance(effect, ActivateAcc):
                schedule.acc_command = True
                schedule.set_speed = effect.set_speed
            elif isinstance(effect, DeactivateAcc):
                schedule.acc_command = False
            elif isinstance(effect, SetAcceleration):
                schedule.overrides[effect.target] = effect.acceleration
            logger.debug(f"Event {event.id} ({effect.type}) fired at t={time!r}")

        # ускорения на [t_s, t_{s+1})
        accelerations: Dict[str, float] = {}
        for obj in scenario.objects:
            speed = speeds[obj.id]
            if obj.id == ego.id:
                if config.loop_mode == "closed" and available.get("acc_active"):
                    acceleration = float(available["a_target"]) - dynamics.road_load(speed)
                else:
                    acceleration = _behavior_acceleration(obj, schedule, time)
                acceleration = min(max(acceleration, dynamics.a_min), dynamics.a_max)
            else:
                acceleration = _behavior_acceleration(obj, schedule, time)
            if speed + acceleration * dt < 0:
                acceleration = -speed / dt
            accelerations[obj.id] = acceleration

        states = tuple(
            ObjectState(
                object_id=obj.id,
                position=positions[obj.id],
                lane_index=initial[obj.id].lane_index,
                speed=speeds[obj.id],
                acceleration=accelerations[obj.id],
            )
            for obj in scenario.objects
        )
        scene = Scene(
            time=time,
            scenery=scenery,
            movable_object_states=states,
            self_representations=self_representations,
            relationships=compute_relationships(states),
            observer=observer_id,
        )
        inputs = derive_inputs(scene, schedule, test_object.port)
        outputs = dict(test_object.step(inputs))
        state_values = list(positions.values()) + list(speeds.values()) + list(accelerations.values())
        a_target = outputs.get("a_target")
        if a_target is None or not _finite([float(a_target)]) or not _finite(state_values):
            message = f"Non-finite value at step {i} (t={time!r} s) in {case.id}"
            logger.error(f"[ERROR] {message}")
            raise NumericalFault(message, build_trace(False, message))

        gap, v_lead = lead_state(scene, ego.id)
        row = {
            "time": time,
            "v_ego": speeds[ego.id],
            "a_ego": max(0.0, -accelerations[ego.id]),
            "acc_active": 1.0 if available.get("acc_active") else 0.0,
            "v_set": schedule.set_speed,
            "a_target": float(available.get("a_target", 0.0)),
            "gap": gap,
            "v_lead": v_lead,
        }
        for name in TRACE_COLUMNS:
            columns[name].append(row[name])
        if record_scenes:
            samples.append(
                TraceSample(
                    time=time,
                    scene=scene,
                    test_object_inputs=inputs,
                    test_object_outputs=dict(available),
                    flags={"acc_active": bool(available.get("acc_active")), "acc_command": schedule.acc_command},
                )
            )
        if observer is not None:
            observer.observe(row)

        available = outputs
        for obj in scenario.objects:
            positions[obj.id] = positions[obj.id] + speeds[obj.id] * dt
            speed = speeds[obj.id] + accelerations[obj.id] * dt
            speeds[obj.id] = 0.0 if speed < 0 else speed

    logger.info(f"[OK] {case.id}: {count} samples, final v_ego={speeds[ego.id]!r} m/s")
    return build_trace(True, None)


def lead_state(scene: Scene, ego_id: str) -> Tuple[float, float]:
    """Дистанция и скорость ближайшего объекта впереди; NaN, если его нет"""
    ego = scene.state_of(ego_id)
    for relation in scene.relationships:
        if relation.kind == "follows" and relation.subject == ego_id:
            lead = scene.state_of(relation.object)
            return lead.position - ego.position, lead.speed
    return math.nan, math.nan
