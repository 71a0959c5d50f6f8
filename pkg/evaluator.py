"""
Оценка тестов: периоды применения, результаты метрик, оценка по порогу
или шкале, вердикты тестовых случаев и отчет по тестовой процедуре.

Одна и та же логика работает инкрементально (CaseMonitor получает отсчеты
во время прогона) и по записанной трассе (evaluate_case).
"""
import logging
import math
from typing import Any, Dict, List, Literal, Mapping, Optional, Sequence, Tuple

from config import settings
from conditions import ConditionState, referenced_signals
from exceptions import ConfigurationError, IncompleteInput, MissingSignal, TraceMismatch, UnknownSignal
from scenario_model import ConcreteScenario
from schemas import FrozenModel
from simulation import ExecutionTrace
from specification import (
    AverageEgoDecelerationFormula,
    ConditionNoLongerFulfilled,
    Elapsed,
    EvaluationCriterion,
    EvaluationMetric,
    EventOccurred,
    MetricFormula,
    TestCase,
    TestProcedure,
    Threshold,
    metric_catalog,
)
from utils import step_index

logger = logging.getLogger(__name__)

Verdict = Literal["passed", "failed", "skipped", "invalid_trace"]


# Metric result schemas
class MetricResult(FrozenModel):
    time: float
    value: float
    unit: str
    metric: str


class JudgedResult(FrozenModel):
    result: MetricResult
    fulfillment: float


class Interval(FrozenModel):
    """Полуинтервал [start, end) времени трассы и соответствующие индексы отсчетов"""

    start: float
    end: float
    first_sample: int
    end_sample: int


class ActiveIntervals(FrozenModel):
    intervals: Tuple[Interval, ...] = ()

    def __bool__(self) -> bool:
        return bool(self.intervals)


# Evaluation schemas
class CriterionEvaluation(FrozenModel):
    criterion_id: str
    metric: str
    unit: str
    results: Tuple[JudgedResult, ...] = ()
    aggregate_fulfillment: Optional[float] = None
    fulfilled: bool
    skipped: bool
    intervals: Tuple[Interval, ...] = ()
    result_count: int = 0
    min_value: Optional[float] = None
    max_value: Optional[float] = None


class CaseEvaluation(FrozenModel):
    case_id: str
    case_name: str
    scenario_id: str
    config_id: str
    trace_valid: bool
    criteria: Tuple[CriterionEvaluation, ...]
    verdict: Verdict


class Provenance(FrozenModel):
    trace_hashes: Dict[str, str]
    config_ids: Tuple[str, ...]
    tool_version: str


class TestReport(FrozenModel):
    __test__ = False

    schema_version: int = settings.report_schema_version
    procedure_id: str
    cases: Tuple[CaseEvaluation, ...]
    cross_case: Tuple[CriterionEvaluation, ...] = ()
    overall_verdict: Verdict
    provenance: Provenance


def event_indices(scenario: ConcreteScenario, time_step: float) -> Dict[str, int]:
    """Индексы отсчетов, в которых срабатывают события сценария"""
    return {event.id: step_index(event.trigger_time, time_step) for event in scenario.events}


class PeriodTracker:
    """Пошаговая активация периода применения.

    При окончании по условию период может открываться повторно; при
    окончании по времени или событию он активируется не более одного раза.
    """

    def __init__(self, period, time_step: float, events: Mapping[str, int]):
        self.period = period
        self.time_step = time_step
        self.events = events
        self.condition = ConditionState(period.start_condition)
        self.index = -1
        self.active = False
        self.start_index: Optional[int] = None
        self.start_time = 0.0
        self.last_time = 0.0
        self.used = False
        self.intervals: List[Interval] = []

    def _close(self, time: float) -> None:
        self.intervals.append(
            Interval(start=self.start_time, end=time, first_sample=self.start_index, end_sample=self.index)
        )
        self.active = False
        self.start_index = None

    def _ends_here(self, holds: bool) -> bool:
        end = self.period.end
        if isinstance(end, ConditionNoLongerFulfilled):
            return not holds
        if isinstance(end, Elapsed):
            return self.index - self.start_index >= step_index(end.seconds, self.time_step)
        if isinstance(end, EventOccurred):
            fired = self.events.get(end.event_id)
            return fired is not None and self.start_index < fired <= self.index
        return False

    def step(self, row: Mapping[str, Any]) -> bool:
        self.index += 1
        time = float(row["time"])
        self.last_time = time
        holds = self.condition.step(row)
        if self.active and self._ends_here(holds):
            self._close(time)
            if not isinstance(self.period.end, ConditionNoLongerFulfilled):
                self.used = True
        if not self.active and not self.used and holds:
            self.active = True
            self.start_index = self.index
            self.start_time = time
        return self.active

    def finish(self) -> ActiveIntervals:
        if self.active:
            self.index += 1
            self._close(self.last_time + self.time_step)
        return ActiveIntervals(intervals=tuple(self.intervals))


def _check_signals(criterion_period, columns: Sequence[str]) -> None:
    for name in sorted(referenced_signals(criterion_period.start_condition)):
        if name not in columns:
            raise UnknownSignal(name)


def activate(period, trace: ExecutionTrace, events: Optional[Mapping[str, int]] = None) -> ActiveIntervals:
    """Интервалы активности периода применения на трассе"""
    _check_signals(period, list(trace.evaluation_data))
    tracker = PeriodTracker(period, trace.time_step, events or {})
    for row in trace.rows():
        tracker.step(row)
    return tracker.finish()


def _window_samples(formula: AverageEgoDecelerationFormula, time_step: float) -> int:
    return max(1, round(formula.window / time_step))


def metric_value(
    formula: MetricFormula, data: Mapping[str, Sequence[float]], i: int, start: int, time_step: float
) -> Optional[float]:
    """Значение метрики в отсчете i периода, начавшегося в отсчете start"""
    if formula.type == "ego_speed":
        value = data["v_ego"][i]
    elif formula.type == "average_ego_deceleration":
        w = _window_samples(formula, time_step)
        if i - start < w:
            return None
        # n = w + 1 отсчетов на замкнутом окне [t_s - window, t_s]
        value = math.fsum(data["a_ego"][i - w:i + 1]) / (w + 1)
    else:
        gap, closing = data["gap"][i], data["v_ego"][i] - data["v_lead"][i]
        if not math.isfinite(gap) or not closing > 0:
            return None
        value = gap / closing
    return float(value) if math.isfinite(value) else None


def _require_lead(data: Mapping[str, Sequence[float]]) -> None:
    if "gap" not in data or not any(math.isfinite(v) for v in data["gap"]):
        raise MissingSignal("TTC needs lead-vehicle data (gap, v_lead) in the trace")


def _results(
    metric: EvaluationMetric, trace: ExecutionTrace, intervals: ActiveIntervals
) -> List[MetricResult]:
    data = trace.evaluation_data
    times = data["time"]
    results = []
    for interval in intervals.intervals:
        for i in range(interval.first_sample, interval.end_sample):
            value = metric_value(metric.formula, data, i, interval.first_sample, trace.time_step)
            if value is not None:
                results.append(MetricResult(time=times[i], value=value, unit=metric.output_unit, metric=metric.name))
    return results


def metric_ego_speed(trace: ExecutionTrace, intervals: ActiveIntervals) -> List[MetricResult]:
    return _results(metric_catalog()["Ego_speed"], trace, intervals)


def metric_avg_decel(trace: ExecutionTrace, intervals: ActiveIntervals, window: float = 2.0) -> List[MetricResult]:
    metric = EvaluationMetric(
        name="Average_ego_deceleration",
        formula=AverageEgoDecelerationFormula(window=window),
        output_unit="m/s^2",
    )
    return _results(metric, trace, intervals)


def metric_ttc(trace: ExecutionTrace, intervals: ActiveIntervals) -> List[MetricResult]:
    _require_lead(trace.evaluation_data)
    return _results(metric_catalog()["TTC"], trace, intervals)


def judge(
    criterion: EvaluationCriterion,
    results: Sequence[MetricResult],
    intervals: Sequence[Interval] = (),
    unit: str = "",
) -> CriterionEvaluation:
    """Оценка результатов метрики по порогу или по шкале"""
    judge_spec = criterion.judge
    judged = []
    for result in results:
        if isinstance(judge_spec, Threshold):
            fulfillment = 100.0 if judge_spec.passes(result.value) else 0.0
        else:
            fulfillment = judge_spec.fulfillment(result.value)
        judged.append(JudgedResult(result=result, fulfillment=fulfillment))
    values = [result.value for result in results]
    fulfillments = [item.fulfillment for item in judged]
    skipped = not judged
    return CriterionEvaluation(
        criterion_id=criterion.id,
        metric=criterion.metric,
        unit=unit or (results[0].unit if results else judge_spec.unit),
        results=tuple(judged),
        aggregate_fulfillment=min(fulfillments) if fulfillments else None,
        fulfilled=not skipped and all(f > 0 for f in fulfillments),
        skipped=skipped,
        intervals=tuple(intervals),
        result_count=len(judged),
        min_value=min(values) if values else None,
        max_value=max(values) if values else None,
    )


def case_verdict(trace_valid: bool, evaluations: Sequence[CriterionEvaluation]) -> Verdict:
    if not trace_valid:
        return "invalid_trace"
    if any(not e.fulfilled and not e.skipped for e in evaluations):
        return "failed"
    if any(e.skipped for e in evaluations):
        return "skipped"
    return "passed"


class _CriterionMonitor:
    def __init__(self, criterion: EvaluationCriterion, metric: EvaluationMetric, time_step: float, events):
        self.criterion = criterion
        self.metric = metric
        self.time_step = time_step
        self.tracker = PeriodTracker(criterion.application_period, time_step, events)
        self.results: List[MetricResult] = []
        self.checked = False

    def observe(self, row: Mapping[str, float], data: Mapping[str, Sequence[float]]) -> None:
        if not self.checked:
            _check_signals(self.criterion.application_period, list(row))
            self.checked = True
        if not self.tracker.step(row):
            return
        i = self.tracker.index
        value = metric_value(self.metric.formula, data, i, self.tracker.start_index, self.time_step)
        if value is not None:
            self.results.append(
                MetricResult(time=float(row["time"]), value=value, unit=self.metric.output_unit, metric=self.metric.name)
            )

    def finish(self, data: Mapping[str, Sequence[float]]) -> CriterionEvaluation:
        if self.metric.formula.type == "time_to_collision":
            _require_lead(data)
        intervals = self.tracker.finish()
        return judge(self.criterion, self.results, intervals.intervals, self.metric.output_unit)


class CaseMonitor:
    """Инкрементальная оценка тестового случая по мере поступления отсчетов"""

    def __init__(
        self,
        case: TestCase,
        time_step: float,
        metrics: Optional[Mapping[str, EvaluationMetric]] = None,
        config_id: str = "",
    ):
        self.case = case
        self.config_id = config_id
        catalog = metrics or metric_catalog()
        events = event_indices(case.scenario, time_step)
        self.monitors = []
        for criterion in case.criteria:
            if criterion.metric not in catalog:
                raise ConfigurationError(f"Criterion {criterion.id!r} references unknown metric {criterion.metric!r}")
            self.monitors.append(_CriterionMonitor(criterion, catalog[criterion.metric], time_step, events))
        self.data: Dict[str, List[float]] = {}

    def observe(self, row: Mapping[str, float]) -> None:
        for name, value in row.items():
            self.data.setdefault(name, []).append(float(value))
        for monitor in self.monitors:
            monitor.observe(row, self.data)

    def finish(self, trace_valid: bool = True) -> CaseEvaluation:
        evaluations = tuple(monitor.finish(self.data) for monitor in self.monitors)
        verdict = case_verdict(trace_valid, evaluations)
        logger.info(f"[INFO] {self.case.id}: {verdict}")
        return CaseEvaluation(
            case_id=self.case.id,
            case_name=self.case.name,
            scenario_id=self.case.scenario.id,
            config_id=self.config_id,
            trace_valid=trace_valid,
            criteria=evaluations,
            verdict=verdict,
        )


def evaluate_case(
    case: TestCase, trace: ExecutionTrace, metrics: Optional[Mapping[str, EvaluationMetric]] = None
) -> CaseEvaluation:
    """Оценка по записанной трассе; совпадает с инкрементальной оценкой"""
    if trace.scenario_id != case.scenario.id:
        raise TraceMismatch(f"Trace of scenario {trace.scenario_id!r} does not match case {case.id!r}")
    monitor = CaseMonitor(case, trace.time_step, metrics, trace.config_id)
    for row in trace.rows():
        monitor.observe(row)
    return monitor.finish(trace.valid)


def _cross_case(
    criterion: EvaluationCriterion,
    metric: EvaluationMetric,
    procedure: TestProcedure,
    traces: Mapping[str, ExecutionTrace],
    cases: Mapping[str, TestCase],
) -> CriterionEvaluation:
    results: List[MetricResult] = []
    for case_id in procedure.cases:
        trace = traces[case_id]
        events = event_indices(cases[case_id].scenario, trace.time_step) if case_id in cases else {}
        intervals = activate(criterion.application_period, trace, events)
        if metric.formula.type == "time_to_collision":
            _require_lead(trace.evaluation_data)
        results.extend(_results(metric, trace, intervals))
    return judge(criterion, results, (), metric.output_unit)


def evaluate_procedure(
    procedure: TestProcedure,
    evaluations: Mapping[str, CaseEvaluation],
    traces: Mapping[str, ExecutionTrace],
    trace_hashes: Mapping[str, str],
    cases: Optional[Mapping[str, TestCase]] = None,
    metrics: Optional[Mapping[str, EvaluationMetric]] = None,
) -> TestReport:
    """Отчет по процедуре: вердикты случаев в порядке процедуры и межслучайные критерии"""
    missing = [case_id for case_id in procedure.cases if case_id not in evaluations or case_id not in traces]
    if missing:
        raise IncompleteInput(f"No evaluation or trace for {', '.join(missing)} in procedure {procedure.id!r}")
    catalog = metrics or metric_catalog()
    case_evaluations = tuple(evaluations[case_id] for case_id in procedure.cases)
    cross = tuple(
        _cross_case(criterion, catalog[criterion.metric], procedure, traces, cases or {})
        for criterion in procedure.cross_case_criteria
    )

    verdicts = [evaluation.verdict for evaluation in case_evaluations]
    if "invalid_trace" in verdicts:
        overall = "invalid_trace"
    elif "failed" in verdicts or any(not e.fulfilled and not e.skipped for e in cross):
        overall = "failed"
    elif "skipped" in verdicts or any(e.skipped for e in cross):
        overall = "skipped"
    else:
        overall = "passed"

    config_ids = tuple(sorted({traces[case_id].config_id for case_id in procedure.cases}))
    report = TestReport(
        procedure_id=procedure.id,
        cases=case_evaluations,
        cross_case=cross,
        overall_verdict=overall,
        provenance=Provenance(
            trace_hashes={case_id: trace_hashes.get(case_id, "") for case_id in procedure.cases},
            config_ids=config_ids,
            tool_version=settings.app_version,
        ),
    )
    logger.info(f"[OK] Procedure {procedure.id}: {overall}")
    return report


def metric_result_rows(report: TestReport) -> List[Dict[str, Any]]:
    """Строки результатов метрик для колоночного экспорта"""
    rows = []
    for case in report.cases:
        for evaluation in case.criteria:
            for item in evaluation.results:
                rows.append({
                    "metric": f"{case.case_id}/{evaluation.criterion_id}/{item.result.metric}",
                    "time": item.result.time,
                    "value": item.result.value,
                    "unit": item.result.unit,
                    "fulfillment": item.fulfillment,
                })
    return rows
