"""
Конкретизация логических сценариев: каждому параметру присваивается
фиксированное значение по выбранной стратегии (сетка, граничные значения,
случайная выборка с фиксированным seed).
"""
import itertools
import logging
from typing import Annotated, Any, Dict, List, Literal, Mapping, Sequence, Tuple, Union

import numpy as np
from pydantic import Field

from config import settings
from exceptions import InvalidLogical, MissingParameter
from scenario_model import (
    ConcreteScenario,
    LogicalScenario,
    MovableObject,
    NormalDistribution,
    ParameterRange,
    ParamRef,
    ParameterValue,
    RealWorldTestDrive,
    ScenarioEvent,
    Scenery,
    initial_scene,
    is_member,
    validate_logical,
)
from schemas import FrozenModel

logger = logging.getLogger(__name__)


# Strategy schemas
class GridStrategy(FrozenModel):
    type: Literal["grid"] = "grid"
    points_per_parameter: int = Field(ge=2)


class UniformRandomStrategy(FrozenModel):
    type: Literal["uniform_random"] = "uniform_random"
    count: int = Field(ge=1)
    seed: int = Field(ge=0, le=2**64 - 1)


class BoundaryStrategy(FrozenModel):
    type: Literal["boundary"] = "boundary"
    include_center: bool = False


Strategy = Annotated[Union[GridStrategy, UniformRandomStrategy, BoundaryStrategy], Field(discriminator="type")]


class ConcretizationConfig(FrozenModel):
    strategy: Strategy
    # пустой префикс заменяется id логического сценария
    id_prefix: str = ""


Assignment = Dict[str, float]


def _substitute(data: Any, values: Mapping[str, float]) -> Any:
    if isinstance(data, dict):
        if set(data) == {"param"}:
            return values[data["param"]]
        return {key: _substitute(value, values) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [_substitute(value, values) for value in data]
    return data


def instantiate(
    logical: LogicalScenario,
    values: Mapping[str, float],
    scenario_id: str,
    annotations: Sequence[str] = (),
) -> ConcreteScenario:
    """Собирает конкретный сценарий из шаблонов логического и значений параметров (СИ)"""
    scenery = Scenery.model_validate(_substitute(logical.scenery_template.model_dump(), values))
    objects = tuple(
        MovableObject.model_validate(_substitute(template.model_dump(), values))
        for template in logical.object_templates
    )
    events = tuple(
        ScenarioEvent.model_validate(_substitute(template.model_dump(), values))
        for template in logical.event_templates
    )
    duration = values[logical.duration.param] if isinstance(logical.duration, ParamRef) else logical.duration

    scene = initial_scene(scenery, objects, logical.self_representations)
    return ConcreteScenario(
        id=scenario_id,
        parent=logical.id,
        objects=objects,
        initial_scene=scene,
        events=events,
        goals_values=logical.goals_values,
        duration=duration,
        parameter_values={
            p.name: ParameterValue(value=float(values[p.name]), unit=p.unit) for p in logical.parameters
        },
        annotations=tuple(annotations),
    )


def _correlation_violations(logical: LogicalScenario, values: Mapping[str, float]) -> List[str]:
    violations = []
    for parameter in logical.parameters:
        for correlation in parameter.correlations:
            if not correlation.holds(values[parameter.name], values[correlation.other]):
                violations.append(
                    f"correlation violated: {parameter.name} {correlation.op} "
                    f"{correlation.factor!r}*{correlation.other} + {correlation.offset!r}"
                )
    return violations


def _axis_values(parameter: ParameterRange, candidates: Sequence[float]) -> List[float]:
    if parameter.is_point:
        return [parameter.min]
    return [float(v) for v in candidates]


def grid_assignments(parameters: Sequence[ParameterRange], points: int) -> List[Assignment]:
    """Декартово произведение n равноотстоящих значений каждого параметра"""
    axes = [_axis_values(p, np.linspace(p.min, p.max, points)) for p in parameters]
    return [dict(zip([p.name for p in parameters], combo)) for combo in itertools.product(*axes)]


def boundary_assignments(parameters: Sequence[ParameterRange], include_center: bool) -> List[Assignment]:
    """Все комбинации min/max; опционально центр диапазона"""
    axes = [_axis_values(p, (p.min, p.max)) for p in parameters]
    names = [p.name for p in parameters]
    assignments = [dict(zip(names, combo)) for combo in itertools.product(*axes)]
    if include_center:
        assignments.append({p.name: p.min if p.is_point else (p.min + p.max) / 2 for p in parameters})
    return assignments


def _draw(parameter: ParameterRange, rng: np.random.Generator) -> float:
    if parameter.is_point:
        return parameter.min
    if isinstance(parameter.distribution, NormalDistribution):
        mean, stddev = parameter.distribution.mean, parameter.distribution.stddev
        value = mean
        for _ in range(settings.normal_max_attempts):
            value = float(rng.normal(mean, stddev))
            if parameter.contains(value):
                return value
        # усеченное нормальное: после лимита попыток значение прижимается к границе
        return min(max(value, parameter.min), parameter.max)
    value = parameter.min + float(rng.random()) * (parameter.max - parameter.min)
    return min(max(value, parameter.min), parameter.max)


def random_assignments(
    logical: LogicalScenario, count: int, seed: int
) -> List[Tuple[Assignment, List[str]]]:
    """Случайная выборка PCG64(seed) с отбором по корреляциям"""
    rng = np.random.Generator(np.random.PCG64(seed))
    results = []
    for _ in range(count):
        values: Assignment = {}
        violations: List[str] = []
        for _attempt in range(settings.correlation_max_attempts):
            values = {p.name: _draw(p, rng) for p in logical.parameters}
            violations = _correlation_violations(logical, values)
            if not violations:
                break
        results.append((values, violations))
    return results


def concretize(logical: LogicalScenario, config: ConcretizationConfig) -> List[ConcreteScenario]:
    """Порождает конкретные сценарии; результат детерминирован для (logical, config)"""
    report = validate_logical(logical)
    if not report.is_empty:
        raise InvalidLogical(logical.id, report.messages())

    strategy = config.strategy
    if isinstance(strategy, GridStrategy):
        assignments = grid_assignments(logical.parameters, strategy.points_per_parameter)
        drafts = [(v, _correlation_violations(logical, v)) for v in assignments]
    elif isinstance(strategy, BoundaryStrategy):
        assignments = boundary_assignments(logical.parameters, strategy.include_center)
        drafts = [(v, _correlation_violations(logical, v)) for v in assignments]
    else:
        drafts = random_assignments(logical, strategy.count, strategy.seed)

    prefix = config.id_prefix or logical.id
    width = max(3, len(str(len(drafts))))
    scenarios = []
    for index, (values, violations) in enumerate(drafts, start=1):
        scenarios.append(instantiate(logical, values, f"{prefix}-{index:0{width}d}", violations))
        if violations:
            logger.warning(f"[WARNING] {prefix}-{index:0{width}d}: " + "; ".join(violations))

    logger.info(f"[OK] Concretized {len(scenarios)} scenarios from {logical.id} ({strategy.type})")
    return scenarios


def assign_drive(drive: RealWorldTestDrive, catalog: Sequence[LogicalScenario]) -> Dict[str, List[str]]:
    """Сопоставляет записанные сценарии поездки логическим сценариям каталога"""
    assignment: Dict[str, List[str]] = {}
    for scenario in drive.recorded_scenarios:
        members = []
        for logical in catalog:
            try:
                if is_member(scenario, logical):
                    members.append(logical.id)
            except MissingParameter as e:
                logger.debug(f"{scenario.id} is not a member of {logical.id}: {e}")
        assignment[scenario.id] = members
        logger.info(f"[INFO] {scenario.id} -> {members or 'no logical scenario'}")
    return assignment
