import math

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from evaluator import (
    CaseMonitor,
    CriterionEvaluation,
    Interval,
    MetricResult,
    activate,
    case_verdict,
    evaluate_case,
    evaluate_procedure,
    judge,
    metric_avg_decel,
    metric_ego_speed,
    metric_result_rows,
    metric_ttc,
)
from exceptions import ConfigurationError, IncompleteInput, MissingSignal, TraceMismatch
from loader import parse_model
from scenario_model import initial_scene
from simulation import run_test_case
from specification import ApplicationPeriod, EvaluationCriterion, TestProcedure
from trace_io import trace_from_csv, trace_to_csv

ACTIVE = ApplicationPeriod(start_condition="flag(acc_active)")


def threshold_criterion():
    return parse_model(
        EvaluationCriterion,
        {
            "id": "decel",
            "metric": "Average_ego_deceleration",
            "judge": {"type": "threshold", "value": 3.5, "unit": "m/s^2", "direction": "must_not_exceed"},
            "application_period": {"start_condition": "flag(acc_active)"},
        },
    )


def evaluation(fulfilled, skipped):
    return CriterionEvaluation(criterion_id="c", metric="m", unit="", fulfilled=fulfilled, skipped=skipped)


# Application period
def test_period_reopens_after_condition_ends(make_trace):
    trace = make_trace(time_step=1.0, acc_active=[0, 1, 1, 0, 1])
    intervals = activate(ACTIVE, trace).intervals
    assert intervals == (
        Interval(start=1.0, end=3.0, first_sample=1, end_sample=3),
        Interval(start=4.0, end=5.0, first_sample=4, end_sample=5),
    )


def test_elapsed_end_activates_once(make_trace):
    period = ApplicationPeriod(start_condition="flag(acc_active)", end={"type": "elapsed", "seconds": 2.0})
    intervals = activate(period, make_trace(time_step=1.0, acc_active=[1] * 5)).intervals
    assert intervals == (Interval(start=0.0, end=2.0, first_sample=0, end_sample=2),)


def test_event_end_closes_period(make_trace):
    period = ApplicationPeriod(start_condition="flag(acc_active)", end={"type": "event", "event_id": "brake"})
    intervals = activate(period, make_trace(time_step=1.0, acc_active=[1] * 5), {"brake": 3}).intervals
    assert [(i.first_sample, i.end_sample) for i in intervals] == [(0, 3)]


def test_period_that_never_starts_is_empty(make_trace):
    assert not activate(ACTIVE, make_trace(acc_active=[0, 0, 0]))


# Metrics
def test_average_deceleration_over_closed_window(make_trace):
    trace = make_trace(time_step=0.1, acc_active=[1] * 4, a_ego=[3.0, 3.0, 4.0, 4.0])
    results = metric_avg_decel(trace, activate(ACTIVE, trace), window=0.3)
    assert len(results) == 1
    assert results[0].value == pytest.approx(3.5)
    assert results[0].time == pytest.approx(0.3)
    assert results[0].unit == "m/s^2"


def window_means_by_brute_force(flags, decelerations, w):
    """(индекс, среднее) для каждого отсчета, у которого окно целиком внутри активного участка"""
    means = []
    start = None
    for i, flag in enumerate(flags):
        if not flag:
            start = None
            continue
        if start is None:
            start = i
        if i - start >= w:
            means.append((i, math.fsum(decelerations[i - w:i + 1]) / (w + 1)))
    return means


@given(
    data=st.integers(min_value=10, max_value=500).flatmap(
        lambda n: st.tuples(
            st.lists(st.sampled_from([0, 1]), min_size=n, max_size=n),
            st.lists(st.floats(min_value=0.0, max_value=10.0), min_size=n, max_size=n),
        )
    ),
    window_samples=st.integers(min_value=1, max_value=20),
)
@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
def test_average_deceleration_matches_brute_force(make_trace, data, window_samples):
    flags, decelerations = data
    trace = make_trace(time_step=0.1, acc_active=flags, a_ego=decelerations)
    results = metric_avg_decel(trace, activate(ACTIVE, trace), window=window_samples * 0.1)
    expected = window_means_by_brute_force(flags, decelerations, window_samples)
    assert [r.time for r in results] == [trace.evaluation_data["time"][i] for i, _ in expected]
    assert [r.value for r in results] == pytest.approx([mean for _, mean in expected], rel=1e-12)


def test_aggressive_window_means_match_exported_trace(aggressive_trace):
    text = trace_to_csv(aggressive_trace)
    rows = [line.split(",") for line in text.splitlines()[2:]]
    flags = [row[3] == "1" for row in rows]
    decelerations = [float(row[2]) for row in rows]
    expected = window_means_by_brute_force(flags, decelerations, 200)
    restored = trace_from_csv(text)
    results = metric_avg_decel(restored, activate(ACTIVE, restored), window=2.0)
    assert len(results) == len(expected) > 0
    assert [r.time for r in results] == [float(rows[i][0]) for i, _ in expected]
    assert [r.value for r in results] == pytest.approx([mean for _, mean in expected], rel=1e-12)
    assert max(r.value for r in results) > 3.5


def test_ego_speed_has_one_result_per_active_sample(make_trace):
    speeds = [30.0, 31.0, 32.0, 33.0, 34.0, 35.0, 36.0]
    trace = make_trace(time_step=0.1, acc_active=[0, 1, 1, 1, 1, 1, 0], v_ego=speeds)
    results = metric_ego_speed(trace, activate(ACTIVE, trace))
    assert len(results) == 5
    assert [r.value for r in results] == speeds[1:6]
    assert [r.time for r in results] == list(trace.evaluation_data["time"][1:6])
    assert {r.unit for r in results} == {"m/s"}


def test_time_to_collision(make_trace):
    trace = make_trace(acc_active=[1, 1], gap=[30.0, 30.0], v_ego=[20.0, 10.0], v_lead=[10.0, 12.0])
    results = metric_ttc(trace, activate(ACTIVE, trace))
    # во втором отсчете ego медленнее лидера
    assert [r.value for r in results] == [3.0]


def test_time_to_collision_needs_lead_vehicle(make_trace):
    trace = make_trace(acc_active=[1, 1])
    with pytest.raises(MissingSignal):
        metric_ttc(trace, activate(ACTIVE, trace))


# Judging
def test_threshold_judgement():
    results = [MetricResult(time=t, value=v, unit="m/s^2", metric="a") for t, v in ((0.0, 3.0), (0.1, 3.6))]
    evaluated = judge(threshold_criterion(), results)
    assert [item.fulfillment for item in evaluated.results] == [100.0, 0.0]
    assert evaluated.aggregate_fulfillment == 0.0
    assert not evaluated.fulfilled
    assert evaluated.max_value == 3.6


def test_no_results_means_skipped():
    evaluated = judge(threshold_criterion(), [])
    assert evaluated.skipped
    assert not evaluated.fulfilled
    assert evaluated.aggregate_fulfillment is None


@pytest.mark.parametrize(
    "trace_valid, evaluations, verdict",
    [
        (False, [evaluation(True, False)], "invalid_trace"),
        (True, [evaluation(False, True), evaluation(False, False)], "failed"),
        (True, [evaluation(True, False), evaluation(False, True)], "skipped"),
        (True, [evaluation(True, False), evaluation(True, False)], "passed"),
    ],
)
def test_case_verdict_priority(trace_valid, evaluations, verdict):
    assert case_verdict(trace_valid, evaluations) == verdict


# Bundle cases
def test_baseline_case_passes(baseline_evaluation):
    assert baseline_evaluation.verdict == "passed"
    speed, decel = baseline_evaluation.criteria
    assert 90.0 < speed.aggregate_fulfillment < 95.0
    assert speed.intervals[0].end == pytest.approx(30.01)
    assert decel.results[0].result.time == pytest.approx(4.01)
    assert decel.max_value < 3.5
    assert baseline_evaluation.config_id == "sil-baseline"


def test_aggressive_case_fails(case, aggressive_trace):
    result = evaluate_case(case, aggressive_trace)
    assert result.verdict == "failed"
    decel = result.criteria[1]
    assert not decel.fulfilled
    assert decel.max_value > 3.5
    assert result.criteria[0].fulfilled


def starting_at(case, speed):
    objects = tuple(
        obj.model_copy(update={"initial_state": obj.initial_state.model_copy(update={"speed": speed})})
        if obj.kind == "ego_vehicle"
        else obj
        for obj in case.scenario.objects
    )
    scene = case.scenario.initial_scene
    first = initial_scene(scene.scenery, objects, scene.self_representations, scene.observer)
    scenario = case.scenario.model_copy(update={"objects": objects, "initial_scene": first})
    return case.model_copy(update={"scenario": scenario})


def test_activation_below_set_speed_does_not_count_as_reaching_it(baseline_config, case, acc_factory):
    slow = starting_at(case, 100 / 3.6)
    trace = run_test_case(baseline_config, slow, acc_factory(baseline_config), record_scenes=False)
    assert trace.column("v_ego").max() < 120 / 3.6
    result = evaluate_case(slow, trace)
    speed, decel = result.criteria
    assert speed.skipped
    assert speed.intervals == ()
    assert decel.fulfilled
    assert result.verdict == "skipped"


def test_trace_of_other_scenario_is_rejected(case, make_trace):
    with pytest.raises(TraceMismatch):
        evaluate_case(case, make_trace(scenario_id="Other", acc_active=[1]))


def test_incremental_evaluation_matches_recorded_trace(baseline_config, case, acc_factory, baseline_evaluation):
    monitor = CaseMonitor(case, baseline_config.time_step, config_id=baseline_config.id)
    trace = run_test_case(baseline_config, case, acc_factory(baseline_config), observer=monitor, record_scenes=False)
    assert monitor.finish(trace.valid) == baseline_evaluation


def test_invalid_trace_verdict(case, baseline_trace):
    broken = baseline_trace.model_copy(update={"valid": False, "fault": "Non-finite value"})
    assert evaluate_case(case, broken).verdict == "invalid_trace"


def test_unknown_metric_is_a_configuration_error(case):
    criterion = case.criteria[0].model_copy(update={"metric": "Jerk"})
    with pytest.raises(ConfigurationError):
        CaseMonitor(case.model_copy(update={"criteria": (criterion,)}), 0.01)


# Procedure report
def test_procedure_report(baseline_report, baseline_evaluation, case):
    assert baseline_report.overall_verdict == "passed"
    assert baseline_report.cases == (baseline_evaluation,)
    assert baseline_report.provenance.config_ids == ("sil-baseline",)
    assert baseline_report.provenance.trace_hashes == {case.id: "0" * 64}
    rows = metric_result_rows(baseline_report)
    assert len(rows) == sum(c.result_count for c in baseline_evaluation.criteria)
    assert rows[0]["metric"] == f"{case.id}/criterion-1/Ego_speed"


def test_procedure_needs_every_case(spec):
    with pytest.raises(IncompleteInput, match="No evaluation or trace"):
        evaluate_procedure(spec.procedure_spec[0], {}, {}, {})


def test_failed_case_fails_procedure(case, baseline_trace, baseline_evaluation, aggressive_trace):
    other = case.model_copy(update={"id": "other"})
    procedure = TestProcedure(id="both", cases=(case.id, "other"))
    report = evaluate_procedure(
        procedure,
        {case.id: baseline_evaluation, "other": evaluate_case(other, aggressive_trace)},
        {case.id: baseline_trace, "other": aggressive_trace},
        {case.id: "a" * 64, "other": "b" * 64},
    )
    assert report.overall_verdict == "failed"
    assert [c.verdict for c in report.cases] == ["passed", "failed"]
    assert report.provenance.config_ids == ("sil-aggressive", "sil-baseline")


def test_cross_case_criterion_collects_results_of_all_cases(case, baseline_trace, baseline_evaluation):
    procedure = TestProcedure(id="cross", cases=(case.id,), cross_case_criteria=(case.criterion("criterion-2"),))
    report = evaluate_procedure(
        procedure, {case.id: baseline_evaluation}, {case.id: baseline_trace}, {}, cases={case.id: case}
    )
    assert report.cross_case[0].result_count == baseline_evaluation.criteria[1].result_count
    assert report.cross_case[0].fulfilled
    assert report.provenance.trace_hashes == {case.id: ""}


flags = st.lists(st.sampled_from([0, 1]), min_size=1, max_size=60)


@given(flags)
@settings(max_examples=200, suppress_health_check=[HealthCheck.function_scoped_fixture])
def test_condition_period_covers_exactly_the_flagged_samples(make_trace, values):
    intervals = activate(ACTIVE, make_trace(time_step=1.0, acc_active=values)).intervals
    active = [i for interval in intervals for i in range(interval.first_sample, interval.end_sample)]
    assert active == [i for i, value in enumerate(values) if value]
    for before, after in zip(intervals, intervals[1:]):
        assert before.end < after.start


@given(flags)
@settings(max_examples=200, suppress_health_check=[HealthCheck.function_scoped_fixture])
def test_once_latched_period_never_deactivates(make_trace, values):
    period = ApplicationPeriod(start_condition="once(flag(acc_active))")
    intervals = activate(period, make_trace(time_step=1.0, acc_active=values)).intervals
    if 1 in values:
        assert [(i.first_sample, i.end_sample) for i in intervals] == [(values.index(1), len(values))]
    else:
        assert intervals == ()


@given(flags, st.integers(min_value=1, max_value=10))
@settings(max_examples=200, suppress_health_check=[HealthCheck.function_scoped_fixture])
def test_elapsed_period_is_single_and_bounded(make_trace, values, seconds):
    period = ApplicationPeriod(start_condition="flag(acc_active)", end={"type": "elapsed", "seconds": float(seconds)})
    intervals = activate(period, make_trace(time_step=1.0, acc_active=values)).intervals
    assert len(intervals) == (1 if 1 in values else 0)
    for interval in intervals:
        assert interval.first_sample == values.index(1)
        assert interval.end_sample - interval.first_sample <= seconds
