"""
Планирование и спецификация тестов: план, цели, объект тестирования,
метрики, критерии оценки, периоды применения, тестовые случаи и процедуры.
"""
from collections import Counter
from typing import Annotated, Any, Dict, Iterable, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import Field, field_serializer, field_validator, model_validator

from conditions import (
    And,
    Compare,
    Condition,
    Flag,
    Once,
    Or,
    check_condition,
    check_depth,
    parse_condition,
    serialize_condition,
)
from config import settings
from exceptions import ConditionSyntaxError, EmptyCriteria
from scenario_model import ConcreteScenario, validate_concrete
from schemas import SIGNAL_CATALOG, FrozenModel, ReportBuilder, SignalSpec, ValidationReport
from utils import Duration, si_unit, stable_hash, to_si, unit_dimension

CASE_SCOPES = {"scene", "scenario"}
CROSS_CASE_SCOPES = {"procedure", "cross_procedure"}


# Test planning schemas
class PlanDocument(FrozenModel):
    """Документ верхнего уровня: хранится только id, заголовок и родитель"""

    id: str
    title: str
    kind: Literal["project_plan", "organizational_test_strategy", "project_test_plan", "sub_process_test_plan"]
    parent: Optional[str] = None


class TestObjective(FrozenModel):
    __test__ = False

    id: str
    description: str
    children: Tuple["TestObjective", ...] = ()


class TestObjectRef(FrozenModel):
    __test__ = False

    id: str
    name: str
    version: str
    kind: Literal["vehicle", "system", "component", "software_unit"]


class ExcludedFeature(FrozenModel):
    feature: str
    rationale: str


class TestScope(FrozenModel):
    __test__ = False

    included_features: Tuple[str, ...] = ()
    excluded_features: Tuple[ExcludedFeature, ...] = ()


class TestPlan(FrozenModel):
    __test__ = False

    id: str
    level: Literal["vehicle", "system", "component", "unit"]
    objectives: Tuple[TestObjective, ...]
    test_object: TestObjectRef
    scope: TestScope = TestScope()
    strategy_notes: str = ""
    design_technique: str = ""
    parent_document: Optional[str] = None


# Metric schemas
class EgoSpeedFormula(FrozenModel):
    type: Literal["ego_speed"] = "ego_speed"


class AverageEgoDecelerationFormula(FrozenModel):
    type: Literal["average_ego_deceleration"] = "average_ego_deceleration"
    window: Duration


class TimeToCollisionFormula(FrozenModel):
    type: Literal["time_to_collision"] = "time_to_collision"


MetricFormula = Annotated[
    Union[EgoSpeedFormula, AverageEgoDecelerationFormula, TimeToCollisionFormula], Field(discriminator="type")
]

FORMULA_DIMENSIONS = {
    "ego_speed": "speed",
    "average_ego_deceleration": "acceleration",
    "time_to_collision": "time",
}


class EvaluationMetric(FrozenModel):
    name: str
    formula: MetricFormula
    output_unit: str


BUILTIN_METRICS: Tuple[EvaluationMetric, ...] = (
    EvaluationMetric(name="Ego_speed", formula=EgoSpeedFormula(), output_unit="m/s"),
    EvaluationMetric(
        name="Average_ego_deceleration",
        formula=AverageEgoDecelerationFormula(window=2.0),
        output_unit="m/s^2",
    ),
    EvaluationMetric(name="TTC", formula=TimeToCollisionFormula(), output_unit="s"),
)


def metric_catalog(extra: Iterable[EvaluationMetric] = ()) -> Dict[str, EvaluationMetric]:
    """Встроенные метрики, дополненные (или переопределенные) метриками из файлов"""
    catalog = {metric.name: metric for metric in BUILTIN_METRICS}
    for metric in extra:
        catalog[metric.name] = metric
    return catalog


# Application period schemas
class ConditionNoLongerFulfilled(FrozenModel):
    type: Literal["condition_no_longer_fulfilled"] = "condition_no_longer_fulfilled"


class Elapsed(FrozenModel):
    type: Literal["elapsed"] = "elapsed"
    seconds: Duration


class EventOccurred(FrozenModel):
    type: Literal["event"] = "event"
    event_id: str


EndRule = Annotated[Union[ConditionNoLongerFulfilled, Elapsed, EventOccurred], Field(discriminator="type")]


class ApplicationPeriod(FrozenModel):
    start_condition: Condition
    end: EndRule = ConditionNoLongerFulfilled()

    @field_validator("start_condition", mode="before")
    @classmethod
    def parse_text(cls, value: Any) -> Any:
        try:
            if isinstance(value, str):
                return parse_condition(value)
            if isinstance(value, (And, Compare, Flag, Once, Or)):
                return check_depth(value)
        except ConditionSyntaxError as e:
            raise ValueError(str(e)) from None
        return value

    @field_serializer("start_condition")
    def print_condition(self, value: Condition) -> str:
        return serialize_condition(value)


# Judge schemas
def _convert_judge_units(data: Any, keys: Sequence[str]) -> Any:
    if not isinstance(data, dict) or "unit" not in data:
        return data
    unit = str(data["unit"])
    unit_dimension(unit)
    data = dict(data)
    for key in keys:
        if isinstance(data.get(key), (int, float)) and not isinstance(data.get(key), bool):
            data[key] = to_si(data[key], unit)
    if "breakpoints" in data and isinstance(data["breakpoints"], (list, tuple)):
        converted = []
        for point in data["breakpoints"]:
            if isinstance(point, (list, tuple)) and len(point) == 2:
                point = {"value": point[0], "fulfillment": point[1]}
            if isinstance(point, dict) and isinstance(point.get("value"), (int, float)):
                point = {**point, "value": to_si(point["value"], unit)}
            converted.append(point)
        data["breakpoints"] = converted
    data["unit"] = si_unit(unit)
    return data


class Threshold(FrozenModel):
    type: Literal["threshold"] = "threshold"
    value: float
    unit: str
    direction: Literal["must_not_exceed", "must_not_fall_below"]

    @model_validator(mode="before")
    @classmethod
    def convert_to_si(cls, data: Any) -> Any:
        return _convert_judge_units(data, ("value",))

    def passes(self, value: float) -> bool:
        if self.direction == "must_not_exceed":
            return value <= self.value
        return value >= self.value


class Breakpoint(FrozenModel):
    value: float
    fulfillment: float


class Scale(FrozenModel):
    """Кусочно-линейная шкала выполнения; вне точек излома действует out_of_domain"""

    type: Literal["scale"] = "scale"
    unit: str
    breakpoints: Tuple[Breakpoint, ...]
    out_of_domain: float = 0.0

    @model_validator(mode="before")
    @classmethod
    def convert_to_si(cls, data: Any) -> Any:
        return _convert_judge_units(data, ())

    def fulfillment(self, value: float) -> float:
        xs = [point.value for point in self.breakpoints]
        ys = [point.fulfillment for point in self.breakpoints]
        if not xs or value < xs[0] or value > xs[-1]:
            return self.out_of_domain
        return float(np.interp(value, xs, ys))


Judge = Annotated[Union[Threshold, Scale], Field(discriminator="type")]


class EvaluationCriterion(FrozenModel):
    id: str
    metric: str
    judge: Judge
    application_period: ApplicationPeriod
    scope: Literal["scene", "scenario", "procedure", "cross_procedure"] = "scenario"


# Test case and procedure schemas
class TestCase(FrozenModel):
    __test__ = False

    id: str
    name: str
    scenario: ConcreteScenario
    criteria: Tuple[EvaluationCriterion, ...] = Field(min_length=1)

    def criterion(self, criterion_id: str) -> Optional[EvaluationCriterion]:
        for criterion in self.criteria:
            if criterion.id == criterion_id:
                return criterion
        return None


class ActionDescriptor(FrozenModel):
    action: str
    description: str = ""


class TestProcedure(FrozenModel):
    __test__ = False

    id: str
    cases: Tuple[str, ...]
    setup: Tuple[ActionDescriptor, ...] = ()
    wrapup: Tuple[ActionDescriptor, ...] = ()
    cross_case_criteria: Tuple[EvaluationCriterion, ...] = ()
    bench_configs: Tuple[str, ...] = ()


class TestDesignSpec(FrozenModel):
    __test__ = False

    features_to_test: Tuple[str, ...] = ()
    test_conditions: Tuple[str, ...] = ()
    case_format: str
    procedure_format: str


class TestSpecification(FrozenModel):
    __test__ = False

    design: TestDesignSpec
    case_spec: Tuple[TestCase, ...] = ()
    procedure_spec: Tuple[TestProcedure, ...] = ()
    metrics: Tuple[EvaluationMetric, ...] = ()
    plan: Optional[TestPlan] = None
    documents: Tuple[PlanDocument, ...] = ()

    def case(self, case_id: str) -> Optional[TestCase]:
        for case in self.case_spec:
            if case.id == case_id:
                return case
        return None

    def procedure(self, procedure_id: str) -> Optional[TestProcedure]:
        for procedure in self.procedure_spec:
            if procedure.id == procedure_id:
                return procedure
        return None


def build_test_case(
    scenario: ConcreteScenario,
    criteria: Sequence[EvaluationCriterion],
    name: Optional[str] = None,
) -> TestCase:
    """Тестовый случай: конкретный сценарий и один или несколько критериев"""
    if not criteria:
        raise EmptyCriteria(f"Test case for scenario {scenario.id!r} needs at least one evaluation criterion")
    digest = stable_hash([criterion.model_dump(mode="json") for criterion in criteria])
    return TestCase(
        id=f"{scenario.id}-{digest[:8]}",
        name=name or f"Test Case {scenario.id}",
        scenario=scenario,
        criteria=tuple(criteria),
    )


# Validation
def _duplicates(builder: ReportBuilder, path: str, ids: Iterable[str], what: str) -> None:
    for identifier, count in Counter(ids).items():
        if count > 1:
            builder.add(path, f"duplicate {what} id {identifier!r}")


def validate_metric_catalog(metrics: Iterable[EvaluationMetric]) -> ValidationReport:
    builder = ReportBuilder()
    metrics = list(metrics)
    _duplicates(builder, "metrics", [m.name for m in metrics], "metric")
    for i, metric in enumerate(metrics):
        path = f"metrics[{i}]"
        if isinstance(metric.formula, AverageEgoDecelerationFormula) and not metric.formula.window > 0:
            builder.add(f"{path}.formula.window", "window > 0")
        try:
            dimension = unit_dimension(metric.output_unit)
        except ValueError as e:
            builder.add(f"{path}.output_unit", str(e))
            continue
        expected = FORMULA_DIMENSIONS[metric.formula.type]
        if dimension != expected:
            builder.add(f"{path}.output_unit", f"{metric.formula.type} produces {expected}, not {dimension}")
    return builder.build()


def validate_criterion(
    criterion: EvaluationCriterion,
    metrics: Mapping[str, EvaluationMetric],
    scopes: Iterable[str],
    scenarios: Sequence[ConcreteScenario] = (),
    signals: Mapping[str, SignalSpec] = SIGNAL_CATALOG,
) -> ValidationReport:
    """Проверяет метрику, шкалу/порог и период применения критерия"""
    builder = ReportBuilder()
    metric = metrics.get(criterion.metric)
    if metric is None:
        builder.add("metric", f"unknown metric {criterion.metric!r}")
    if criterion.scope not in set(scopes):
        builder.add("scope", f"scope {criterion.scope!r} not allowed here")

    judge = criterion.judge
    if metric is not None and unit_dimension(judge.unit) != unit_dimension(metric.output_unit):
        builder.add("judge.unit", f"{judge.unit} does not match metric unit {metric.output_unit}")
    if isinstance(judge, Scale):
        values = [point.value for point in judge.breakpoints]
        if not values:
            builder.add("judge.breakpoints", "scale needs at least one breakpoint")
        if any(b <= a for a, b in zip(values, values[1:])):
            builder.add("judge.breakpoints", "scale breakpoints sorted by metric value")
        for i, point in enumerate(judge.breakpoints):
            if not 0 <= point.fulfillment <= 100:
                builder.add(f"judge.breakpoints[{i}].fulfillment", "fulfillment ∈ [0, 100]")
        if not 0 <= judge.out_of_domain <= 100:
            builder.add("judge.out_of_domain", "fulfillment ∈ [0, 100]")

    period = criterion.application_period
    for problem in check_condition(period.start_condition, signals):
        builder.add("application_period.start_condition", problem)
    if isinstance(period.end, Elapsed) and not period.end.seconds > 0:
        builder.add("application_period.end.seconds", "elapsed time > 0")
    if isinstance(period.end, EventOccurred):
        for scenario in scenarios:
            if scenario.event(period.end.event_id) is None:
                builder.add(
                    "application_period.end.event_id",
                    f"scenario {scenario.id!r} has no event {period.end.event_id!r}",
                )
    return builder.build()


def _validate_objectives(builder: ReportBuilder, objectives: Sequence[TestObjective], path: str, seen: List[str]) -> None:
    for i, objective in enumerate(objectives):
        seen.append(objective.id)
        if not objective.description.strip():
            builder.add(f"{path}[{i}].description", "description is non-empty")
        _validate_objectives(builder, objective.children, f"{path}[{i}].children", seen)


def validate_test_plan(plan: TestPlan, documents: Sequence[PlanDocument] = ()) -> ValidationReport:
    """Проверяет план тестирования и цепочку вышестоящих документов"""
    builder = ReportBuilder()
    if not plan.objectives:
        builder.add("objectives", "objectives tree non-empty")
    seen: List[str] = []
    _validate_objectives(builder, plan.objectives, "objectives", seen)
    _duplicates(builder, "objectives", seen, "objective")
    if not plan.test_object.version.strip():
        builder.add("test_object.version", "version identifies the exact object under test")
    for i, excluded in enumerate(plan.scope.excluded_features):
        if not excluded.rationale.strip():
            builder.add(f"scope.excluded_features[{i}].rationale", "excluded feature needs a rationale")

    by_id = {document.id: document for document in documents}
    _duplicates(builder, "documents", [d.id for d in documents], "document")
    if plan.parent_document is not None and plan.parent_document not in by_id:
        builder.add("parent_document", f"unknown document {plan.parent_document!r}")
    for document in documents:
        visited = {document.id}
        parent = document.parent
        while parent is not None:
            if parent not in by_id:
                builder.add(f"documents.{document.id}.parent", f"unknown document {parent!r}")
                break
            if parent in visited:
                builder.add(f"documents.{document.id}.parent", "document chain contains a cycle")
                break
            visited.add(parent)
            parent = by_id[parent].parent
    return builder.build()


def validate_specification(
    spec: TestSpecification,
    bench_config_ids: Optional[Iterable[str]] = None,
    signals: Mapping[str, SignalSpec] = SIGNAL_CATALOG,
) -> ValidationReport:
    """Проверяет форматы, перекрестные ссылки и разрешимость метрик"""
    builder = ReportBuilder()
    for key, expected in (("case_format", settings.case_format), ("procedure_format", settings.procedure_format)):
        declared = getattr(spec.design, key)
        if not declared:
            builder.add(f"design.{key}", "format must be declared")
        elif declared != expected:
            builder.add(f"design.{key}", f"unsupported format {declared!r} (expected {expected!r})")

    builder.extend(validate_metric_catalog(spec.metrics))
    metrics = metric_catalog(spec.metrics)

    _duplicates(builder, "case_spec", [c.id for c in spec.case_spec], "test case")
    for i, case in enumerate(spec.case_spec):
        path = f"case_spec[{i}]"
        builder.extend(validate_concrete(case.scenario), f"{path}.scenario")
        _duplicates(builder, f"{path}.criteria", [c.id for c in case.criteria], "criterion")
        for j, criterion in enumerate(case.criteria):
            report = validate_criterion(criterion, metrics, CASE_SCOPES, [case.scenario], signals)
            builder.extend(report, f"{path}.criteria[{j}]")

    case_ids = {case.id for case in spec.case_spec}
    configs = set(bench_config_ids) if bench_config_ids is not None else None
    _duplicates(builder, "procedure_spec", [p.id for p in spec.procedure_spec], "procedure")
    for i, procedure in enumerate(spec.procedure_spec):
        path = f"procedure_spec[{i}]"
        if not procedure.cases:
            builder.add(f"{path}.cases", "a procedure lists one or more test cases")
        for ref in procedure.cases:
            if ref not in case_ids:
                builder.add(f"{path}.cases", f"unknown test case {ref!r}")
        scenarios = [spec.case(ref).scenario for ref in procedure.cases if ref in case_ids]
        for j, criterion in enumerate(procedure.cross_case_criteria):
            report = validate_criterion(criterion, metrics, CROSS_CASE_SCOPES, scenarios, signals)
            builder.extend(report, f"{path}.cross_case_criteria[{j}]")
        if configs is not None:
            for ref in procedure.bench_configs:
                if ref not in configs:
                    builder.add(f"{path}.bench_configs", f"unknown test bench configuration {ref!r}")

    if spec.plan is not None:
        builder.extend(validate_test_plan(spec.plan, spec.documents), "plan")
    return builder.build()
