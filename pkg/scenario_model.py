"""
Модель сценариев: сцена, сценарий на трех уровнях абстракции
(функциональный, логический, конкретный) и реальная тестовая поездка.

Физические величины хранятся в СИ. В файлах значения задаются с единицами
("150 km/h"); поля логического сценария с диапазоном записываются как
{param: NAME} и ссылаются на ParameterRange.
"""
from collections import Counter
from datetime import datetime
from typing import Annotated, Any, Dict, Iterator, List, Literal, Optional, Sequence, Tuple, Union

from dateutil import parser as date_parser
from pydantic import Field, field_validator, model_validator

from exceptions import MissingParameter
from schemas import FrozenModel, ReportBuilder, ValidationReport
from utils import (
    Acceleration,
    Curvature,
    Duration,
    Length,
    Speed,
    Temperature,
    si_unit,
    to_si,
    to_si_scale,
    unit_dimension,
)

ObjectKind = Literal["ego_vehicle", "other_vehicle", "other"]
Role = Literal["actor", "observer"]


# Parameter schemas
class ParamRef(FrozenModel):
    """Ссылка поля шаблона на параметр логического сценария"""

    param: str


def _templated(quantity):
    return Annotated[Union[ParamRef, quantity], Field(union_mode="left_to_right")]


TLength = _templated(Length)
TSpeed = _templated(Speed)
TDuration = _templated(Duration)
TAcceleration = _templated(Acceleration)
TCurvature = _templated(Curvature)
TTemperature = _templated(Temperature)


class UniformDistribution(FrozenModel):
    type: Literal["uniform"] = "uniform"


class NormalDistribution(FrozenModel):
    type: Literal["normal"] = "normal"
    mean: float
    stddev: float


Distribution = Annotated[Union[UniformDistribution, NormalDistribution], Field(discriminator="type")]


class Correlation(FrozenModel):
    """Условие self OP factor*other + offset (в единицах СИ)"""

    op: Literal["<", "<=", ">", ">=", "=="]
    other: str
    factor: float = 1.0
    offset: float = 0.0

    def holds(self, value: float, other_value: float) -> bool:
        bound = self.factor * other_value + self.offset
        if self.op == "<":
            return value < bound
        if self.op == "<=":
            return value <= bound
        if self.op == ">":
            return value > bound
        if self.op == ">=":
            return value >= bound
        return value == bound


class ParameterRange(FrozenModel):
    name: str
    unit: str
    min: float
    max: float
    distribution: Optional[Distribution] = None
    correlations: Tuple[Correlation, ...] = ()

    @model_validator(mode="before")
    @classmethod
    def convert_to_si(cls, data: Any) -> Any:
        """Переводит границы и параметры распределения в СИ"""
        if not isinstance(data, dict) or "unit" not in data:
            return data
        unit = str(data["unit"])
        unit_dimension(unit)
        data = dict(data)
        for key in ("min", "max"):
            if isinstance(data.get(key), (int, float)) and not isinstance(data.get(key), bool):
                data[key] = to_si(data[key], unit)
        distribution = data.get("distribution")
        if isinstance(distribution, dict) and distribution.get("type") == "normal":
            distribution = dict(distribution)
            if isinstance(distribution.get("mean"), (int, float)):
                distribution["mean"] = to_si(distribution["mean"], unit)
            if isinstance(distribution.get("stddev"), (int, float)):
                distribution["stddev"] = to_si_scale(distribution["stddev"], unit)
            data["distribution"] = distribution
        data["unit"] = si_unit(unit)
        return data

    @property
    def dimension(self) -> str:
        return unit_dimension(self.unit)

    @property
    def is_point(self) -> bool:
        return self.min == self.max

    def contains(self, value: float) -> bool:
        return self.min <= value <= self.max


class ParameterValue(FrozenModel):
    value: float
    unit: str

    @property
    def si_value(self) -> float:
        return to_si(self.value, self.unit)


# Scenery schemas
class StationaryElement(FrozenModel):
    label: str
    position: Length
    lateral_offset: Length = 0.0


class Scenery(FrozenModel):
    lane_count: int
    lane_width: Length
    curvature: Curvature = 0.0
    ambient_temperature: Temperature = 20.0
    stationary_elements: Tuple[StationaryElement, ...] = ()


class SceneryTemplate(FrozenModel):
    lane_count: int
    lane_width: TLength
    curvature: TCurvature = 0.0
    ambient_temperature: TTemperature = 20.0
    stationary_elements: Tuple[StationaryElement, ...] = ()


# Behavior schemas
class ConstantSpeedBehavior(FrozenModel):
    type: Literal["constant_speed"] = "constant_speed"


class ProfilePoint(FrozenModel):
    """Ускорение действует с момента time до следующей точки"""

    time: Duration
    acceleration: Acceleration


class ScriptedBehavior(FrozenModel):
    type: Literal["scripted"] = "scripted"
    profile: Tuple[ProfilePoint, ...]

    def acceleration_at(self, time: float) -> float:
        current = 0.0
        for point in self.profile:
            if point.time <= time:
                current = point.acceleration
            else:
                break
        return current


class GoalDrivenBehavior(FrozenModel):
    type: Literal["goal_driven"] = "goal_driven"
    goal: str


BehaviorSpec = Annotated[
    Union[ConstantSpeedBehavior, ScriptedBehavior, GoalDrivenBehavior], Field(discriminator="type")
]


# Movable object schemas
def _normalize_roles(value: Any) -> Any:
    if isinstance(value, (list, tuple, set, frozenset)):
        return tuple(sorted(set(value)))
    return value


class InitialState(FrozenModel):
    position: Length
    lane_index: int
    speed: Speed


class InitialStateTemplate(FrozenModel):
    position: TLength
    lane_index: int
    speed: TSpeed


class MovableObject(FrozenModel):
    id: str
    kind: ObjectKind
    roles: Tuple[Role, ...] = ("actor",)
    initial_state: InitialState
    behavior: BehaviorSpec = ConstantSpeedBehavior()

    @field_validator("roles", mode="before")
    @classmethod
    def sort_roles(cls, value: Any) -> Any:
        return _normalize_roles(value)


class MovableObjectTemplate(FrozenModel):
    id: str
    kind: ObjectKind
    roles: Tuple[Role, ...] = ("actor",)
    initial_state: InitialStateTemplate
    behavior: BehaviorSpec = ConstantSpeedBehavior()

    @field_validator("roles", mode="before")
    @classmethod
    def sort_roles(cls, value: Any) -> Any:
        return _normalize_roles(value)


class SelfRepresentation(FrozenModel):
    owner: str
    skills: Dict[str, bool] = Field(default_factory=dict)
    states: Dict[str, Union[bool, float, str]] = Field(default_factory=dict)


# Event schemas
class ActivateAcc(FrozenModel):
    type: Literal["activate_acc"] = "activate_acc"
    set_speed: Speed


class DeactivateAcc(FrozenModel):
    type: Literal["deactivate_acc"] = "deactivate_acc"


class SetAcceleration(FrozenModel):
    type: Literal["set_acceleration"] = "set_acceleration"
    target: str
    acceleration: Acceleration


EventEffect = Annotated[Union[ActivateAcc, DeactivateAcc, SetAcceleration], Field(discriminator="type")]


class ScenarioEvent(FrozenModel):
    id: str
    trigger_time: Duration
    effect: EventEffect


class ActivateAccTemplate(FrozenModel):
    type: Literal["activate_acc"] = "activate_acc"
    set_speed: TSpeed


class SetAccelerationTemplate(FrozenModel):
    type: Literal["set_acceleration"] = "set_acceleration"
    target: str
    acceleration: TAcceleration


EventEffectTemplate = Annotated[
    Union[ActivateAccTemplate, DeactivateAcc, SetAccelerationTemplate], Field(discriminator="type")
]


class ScenarioEventTemplate(FrozenModel):
    id: str
    trigger_time: TDuration
    effect: EventEffectTemplate


class GoalValue(FrozenModel):
    owner: str
    kind: Literal["goal", "value"]
    persistence: Literal["transient", "permanent"]
    description: Dict[str, Union[bool, float, str]] = Field(default_factory=dict)


# Scene schemas
class ObjectState(FrozenModel):
    object_id: str
    position: Length
    lane_index: int
    speed: Speed
    acceleration: Acceleration = 0.0


class Relationship(FrozenModel):
    kind: str
    subject: str
    object: str


class Scene(FrozenModel):
    time: Duration
    scenery: Scenery
    movable_object_states: Tuple[ObjectState, ...]
    self_representations: Tuple[SelfRepresentation, ...] = ()
    relationships: Tuple[Relationship, ...] = ()
    # None означает объективную сцену
    observer: Optional[str] = None

    def state_of(self, object_id: str) -> Optional[ObjectState]:
        for state in self.movable_object_states:
            if state.object_id == object_id:
                return state
        return None


# Scenario schemas
class FunctionalScenario(FrozenModel):
    id: str
    narrative: str
    vocabulary_tags: Tuple[str, ...] = ()


class LogicalScenario(FrozenModel):
    id: str
    parent: Optional[str] = None
    scenery_template: SceneryTemplate
    object_templates: Tuple[MovableObjectTemplate, ...]
    event_templates: Tuple[ScenarioEventTemplate, ...] = ()
    parameters: Tuple[ParameterRange, ...] = ()
    goals_values: Tuple[GoalValue, ...] = ()
    self_representations: Tuple[SelfRepresentation, ...] = ()
    duration: TDuration

    def parameter(self, name: str) -> Optional[ParameterRange]:
        for parameter in self.parameters:
            if parameter.name == name:
                return parameter
        return None


class ConcreteScenario(FrozenModel):
    id: str
    parent: Optional[str] = None
    objects: Tuple[MovableObject, ...]
    initial_scene: Scene
    events: Tuple[ScenarioEvent, ...] = ()
    goals_values: Tuple[GoalValue, ...] = ()
    duration: Duration
    parameter_values: Dict[str, ParameterValue] = Field(default_factory=dict)
    annotations: Tuple[str, ...] = ()

    def ego(self) -> Optional[MovableObject]:
        egos = [obj for obj in self.objects if obj.kind == "ego_vehicle"]
        return egos[0] if len(egos) == 1 else None

    def event(self, event_id: str) -> Optional[ScenarioEvent]:
        for event in self.events:
            if event.id == event_id:
                return event
        return None


class DriveMetadata(FrozenModel):
    date: datetime
    route: str

    @field_validator("date", mode="before")
    @classmethod
    def parse_date(cls, value: Any) -> Any:
        if isinstance(value, str):
            return date_parser.parse(value)
        return value


class RealWorldTestDrive(FrozenModel):
    id: str
    recorded_scenarios: Tuple[ConcreteScenario, ...]
    metadata: DriveMetadata


# Relationships
def compute_relationships(states: Tuple[ObjectState, ...]) -> Tuple[Relationship, ...]:
    """follows(a, b): b ближайший объект впереди a в той же полосе"""
    relations: List[Relationship] = []
    for state in states:
        ahead = [
            other for other in states
            if other.object_id != state.object_id
            and other.lane_index == state.lane_index
            and other.position > state.position
        ]
        if ahead:
            nearest = min(ahead, key=lambda o: (o.position, o.object_id))
            relations.append(Relationship(kind="follows", subject=state.object_id, object=nearest.object_id))
    return tuple(relations)


# Template traversal
def initial_scene(
    scenery: Scenery,
    objects: Sequence[MovableObject],
    self_representations: Sequence[SelfRepresentation] = (),
    observer: Optional[str] = None,
) -> Scene:
    """Сцена t = 0 из начальных состояний объектов"""
    states = tuple(
        ObjectState(
            object_id=obj.id,
            position=obj.initial_state.position,
            lane_index=obj.initial_state.lane_index,
            speed=obj.initial_state.speed,
            acceleration=obj.behavior.acceleration_at(0.0) if isinstance(obj.behavior, ScriptedBehavior) else 0.0,
        )
        for obj in objects
    )
    return Scene(
        time=0.0,
        scenery=scenery,
        movable_object_states=states,
        self_representations=tuple(self_representations),
        relationships=compute_relationships(states),
        observer=observer,
    )


FieldConstraint = Optional[Literal["positive", "non_negative"]]


def template_fields(scenario: LogicalScenario) -> Iterator[Tuple[str, Any, str, FieldConstraint]]:
    """Все поля шаблона, которые могут задаваться диапазоном: (путь, значение, размерность, ограничение)"""
    scenery = scenario.scenery_template
    yield "scenery_template.lane_width", scenery.lane_width, "length", "positive"
    yield "scenery_template.curvature", scenery.curvature, "curvature", None
    yield "scenery_template.ambient_temperature", scenery.ambient_temperature, "temperature", None
    for i, obj in enumerate(scenario.object_templates):
        base = f"object_templates[{i}].initial_state"
        yield f"{base}.position", obj.initial_state.position, "length", None
        yield f"{base}.speed", obj.initial_state.speed, "speed", "non_negative"
    for i, event in enumerate(scenario.event_templates):
        base = f"event_templates[{i}]"
        yield f"{base}.trigger_time", event.trigger_time, "time", "non_negative"
        if isinstance(event.effect, ActivateAccTemplate):
            yield f"{base}.effect.set_speed", event.effect.set_speed, "speed", "non_negative"
        elif isinstance(event.effect, SetAccelerationTemplate):
            yield f"{base}.effect.acceleration", event.effect.acceleration, "acceleration", None
    yield "duration", scenario.duration, "time", "positive"


def _bounds(value: Any, scenario: LogicalScenario) -> Optional[Tuple[float, float]]:
    if isinstance(value, ParamRef):
        parameter = scenario.parameter(value.param)
        return (parameter.min, parameter.max) if parameter else None
    return (value, value)


def _check_constraint(builder: ReportBuilder, path: str, low: float, constraint: FieldConstraint) -> None:
    name = path.rsplit(".", 1)[-1]
    if constraint == "positive" and not low > 0:
        builder.add(path, f"{name} > 0")
    elif constraint == "non_negative" and not low >= 0:
        builder.add(path, f"{name} ≥ 0")


def _check_ids(builder: ReportBuilder, path: str, ids: List[str], what: str) -> None:
    for identifier, count in Counter(ids).items():
        if count > 1:
            builder.add(path, f"duplicate {what} id {identifier!r}")


# Validation
def validate_functional(scenario: FunctionalScenario) -> ValidationReport:
    """Проверяет функциональный сценарий"""
    builder = ReportBuilder()
    if not scenario.narrative.strip():
        builder.add("narrative", "narrative is non-empty")
    return builder.build()


def validate_logical(scenario: LogicalScenario) -> ValidationReport:
    """Проверяет диапазоны, распределения, корреляции и шаблоны логического сценария"""
    builder = ReportBuilder()
    names = [p.name for p in scenario.parameters]
    for name, count in Counter(names).items():
        if count > 1:
            builder.add("parameters", f"parameter {name!r} is declared {count} times")

    for i, parameter in enumerate(scenario.parameters):
        path = f"parameters[{i}]"
        if not parameter.min <= parameter.max:
            builder.add(f"{path}.min", "min ≤ max")
        if isinstance(parameter.distribution, NormalDistribution) and not parameter.distribution.stddev > 0:
            builder.add(f"{path}.distribution.stddev", "stddev > 0")
        for j, correlation in enumerate(parameter.correlations):
            if correlation.other == parameter.name:
                builder.add(f"{path}.correlations[{j}].other", "parameter cannot be correlated with itself")
            elif correlation.other not in names:
                builder.add(f"{path}.correlations[{j}].other", f"unknown correlated parameter {correlation.other!r}")

    for path, value, dimension, constraint in template_fields(scenario):
        if isinstance(value, ParamRef):
            parameter = scenario.parameter(value.param)
            if parameter is None:
                builder.add(path, f"unbacked range field: no parameter {value.param!r}")
                continue
            if parameter.dimension != dimension:
                builder.add(path, f"parameter {value.param!r} is a {parameter.dimension} range, field needs {dimension}")
                continue
            if parameter.min <= parameter.max:
                _check_constraint(builder, path, parameter.min, constraint)
        else:
            _check_constraint(builder, path, value, constraint)

    if scenario.scenery_template.lane_count < 1:
        builder.add("scenery_template.lane_count", "lane_count ≥ 1")

    object_ids = [obj.id for obj in scenario.object_templates]
    _check_ids(builder, "object_templates", object_ids, "object")
    _check_ids(builder, "event_templates", [e.id for e in scenario.event_templates], "event")
    egos = [obj for obj in scenario.object_templates if obj.kind == "ego_vehicle"]
    if len(egos) != 1:
        builder.add("object_templates", f"exactly one ego (found {len(egos)})")
    for i, obj in enumerate(scenario.object_templates):
        lane = obj.initial_state.lane_index
        if not 0 <= lane < max(scenario.scenery_template.lane_count, 1):
            builder.add(f"object_templates[{i}].initial_state.lane_index", "lane_index outside the road")

    duration = _bounds(scenario.duration, scenario)
    for i, event in enumerate(scenario.event_templates):
        trigger = _bounds(event.trigger_time, scenario)
        if trigger and duration and trigger[1] > duration[0]:
            builder.add(f"event_templates[{i}].trigger_time", "trigger_time ≤ duration")
        if isinstance(event.effect, SetAccelerationTemplate) and event.effect.target not in object_ids:
            builder.add(f"event_templates[{i}].effect.target", f"unknown object {event.effect.target!r}")

    _validate_goals(builder, "goals_values", scenario.goals_values, scenario.object_templates)
    for i, representation in enumerate(scenario.self_representations):
        if representation.owner not in object_ids:
            builder.add(f"self_representations[{i}].owner", f"unknown object {representation.owner!r}")
    return builder.build()


def _validate_goals(builder: ReportBuilder, path: str, goals, objects) -> None:
    actors = {obj.id for obj in objects if "actor" in obj.roles}
    for i, goal in enumerate(goals):
        if goal.owner not in actors:
            builder.add(f"{path}[{i}].owner", f"goal/value owner {goal.owner!r} is not an actor")


def validate_concrete(scenario: ConcreteScenario, parent: Optional[LogicalScenario] = None) -> ValidationReport:
    """Проверяет конкретный сценарий; с родителем дополнительно проверяет полноту параметров"""
    builder = ReportBuilder()
    scene = scenario.initial_scene
    if not scenario.duration > 0:
        builder.add("duration", "duration > 0")
    if scene.time != 0:
        builder.add("initial_scene.time", "initial scene starts at t = 0")
    if scene.scenery.lane_count < 1:
        builder.add("initial_scene.scenery.lane_count", "lane_count ≥ 1")
    if not scene.scenery.lane_width > 0:
        builder.add("initial_scene.scenery.lane_width", "lane_width > 0")

    object_ids = [obj.id for obj in scenario.objects]
    _check_ids(builder, "objects", object_ids, "object")
    egos = [obj for obj in scenario.objects if obj.kind == "ego_vehicle"]
    if len(egos) != 1:
        builder.add("objects", f"exactly one ego (found {len(egos)})")

    for i, obj in enumerate(scenario.objects):
        if not 0 <= obj.initial_state.lane_index < max(scene.scenery.lane_count, 1):
            builder.add(f"objects[{i}].initial_state.lane_index", "lane_index outside the road")
        if obj.initial_state.speed < 0:
            builder.add(f"objects[{i}].initial_state.speed", "speed ≥ 0")

    state_ids = [state.object_id for state in scene.movable_object_states]
    _check_ids(builder, "initial_scene.movable_object_states", state_ids, "state")
    objects = {obj.id: obj for obj in scenario.objects}
    for i, state in enumerate(scene.movable_object_states):
        path = f"initial_scene.movable_object_states[{i}]"
        obj = objects.get(state.object_id)
        if obj is None:
            builder.add(path, f"state for unknown object {state.object_id!r}")
            continue
        initial = obj.initial_state
        if (state.position, state.lane_index, state.speed) != (initial.position, initial.lane_index, initial.speed):
            builder.add(path, f"state of {state.object_id!r} disagrees with its initial_state")
    for missing in sorted(set(objects) - set(state_ids)):
        builder.add("initial_scene.movable_object_states", f"no initial state for object {missing!r}")

    for i, representation in enumerate(scene.self_representations):
        if representation.owner not in objects:
            builder.add(f"initial_scene.self_representations[{i}].owner", f"unknown object {representation.owner!r}")
    if scene.observer is not None and (scene.observer not in objects or "observer" not in objects[scene.observer].roles):
        builder.add("initial_scene.observer", f"{scene.observer!r} is not an observer")
    for i, relation in enumerate(scene.relationships):
        for end in (relation.subject, relation.object):
            if end not in objects:
                builder.add(f"initial_scene.relationships[{i}]", f"unknown object {end!r}")

    _check_ids(builder, "events", [e.id for e in scenario.events], "event")
    for i, event in enumerate(scenario.events):
        if event.trigger_time < 0:
            builder.add(f"events[{i}].trigger_time", "trigger_time ≥ 0")
        elif event.trigger_time > scenario.duration:
            builder.add(f"events[{i}].trigger_time", "trigger_time ≤ duration")
        if isinstance(event.effect, SetAcceleration) and event.effect.target not in objects:
            builder.add(f"events[{i}].effect.target", f"unknown object {event.effect.target!r}")
        if isinstance(event.effect, ActivateAcc) and event.effect.set_speed < 0:
            builder.add(f"events[{i}].effect.set_speed", "set_speed ≥ 0")

    _validate_goals(builder, "goals_values", scenario.goals_values, scenario.objects)

    if parent is not None:
        if scenario.parent != parent.id:
            builder.add("parent", f"expected parent {parent.id!r}, got {scenario.parent!r}")
        declared = {p.name for p in parent.parameters}
        for name in sorted(declared - set(scenario.parameter_values)):
            builder.add("parameter_values", f"missing value for parameter {name!r}")
        for name in sorted(set(scenario.parameter_values) - declared):
            builder.add("parameter_values", f"value for undeclared parameter {name!r}")
    for name, value in scenario.parameter_values.items():
        try:
            unit_dimension(value.unit)
        except ValueError as e:
            builder.add(f"parameter_values.{name}.unit", str(e))
    return builder.build()


def validate_drive(drive: RealWorldTestDrive) -> ValidationReport:
    """Поездка содержит один или несколько корректных конкретных сценариев"""
    builder = ReportBuilder()
    if not drive.recorded_scenarios:
        builder.add("recorded_scenarios", "a test drive contains one or more concrete scenarios")
    _check_ids(builder, "recorded_scenarios", [s.id for s in drive.recorded_scenarios], "scenario")
    for i, scenario in enumerate(drive.recorded_scenarios):
        builder.extend(validate_concrete(scenario), f"recorded_scenarios[{i}]")
    if not drive.metadata.route.strip():
        builder.add("metadata.route", "route label is non-empty")
    return builder.build()


def validate_scenario_catalog(
    functional: Tuple[FunctionalScenario, ...] = (),
    logical: Tuple[LogicalScenario, ...] = (),
    concrete: Tuple[ConcreteScenario, ...] = (),
) -> ValidationReport:
    """Проверяет ссылки на родителей между уровнями абстракции"""
    builder = ReportBuilder()
    functional_ids = {s.id for s in functional}
    logical_by_id = {s.id: s for s in logical}
    for scenario in logical:
        if scenario.parent is not None and scenario.parent not in functional_ids:
            builder.add(f"{scenario.id}.parent", f"unknown functional scenario {scenario.parent!r}")
    for scenario in concrete:
        if scenario.parent is None:
            continue
        parent = logical_by_id.get(scenario.parent)
        if parent is None:
            builder.add(f"{scenario.id}.parent", f"unknown logical scenario {scenario.parent!r}")
            continue
        builder.extend(validate_concrete(scenario, parent), scenario.id)
    return builder.build()


# Membership
def structure_signature(kinds: List[str], effects: List[str]) -> Tuple[Tuple[Tuple[str, int], ...], Tuple[Tuple[str, int], ...]]:
    return tuple(sorted(Counter(kinds).items())), tuple(sorted(Counter(effects).items()))


def is_member(concrete: ConcreteScenario, logical: LogicalScenario) -> bool:
    """Принадлежит ли конкретный сценарий логическому (границы включительно)"""
    for parameter in logical.parameters:
        value = concrete.parameter_values.get(parameter.name)
        if value is None:
            raise MissingParameter(parameter.name, concrete.id)
        try:
            si_value = value.si_value
        except ValueError:
            return False
        if unit_dimension(value.unit) != parameter.dimension or not parameter.contains(si_value):
            return False
    expected = structure_signature(
        [obj.kind for obj in logical.object_templates],
        [event.effect.type for event in logical.event_templates],
    )
    actual = structure_signature(
        [obj.kind for obj in concrete.objects],
        [event.effect.type for event in concrete.events],
    )
    return expected == actual
