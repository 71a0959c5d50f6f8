import json

import pytest

from config import settings
from exceptions import FormatError
from report import read_report, render_text, report_from_json, report_to_json


def test_report_json_is_stable(baseline_report):
    text = report_to_json(baseline_report)
    assert report_from_json(text) == baseline_report
    assert report_to_json(report_from_json(text)) == text


def test_report_json_layout(baseline_report, case):
    data = json.loads(report_to_json(baseline_report))
    assert data["schema_version"] == settings.report_schema_version
    assert data["overall_verdict"] == "passed"
    assert data["cases"][0]["case_id"] == case.id
    assert data["provenance"]["tool_version"] == settings.app_version


def test_unknown_schema_version_is_refused(baseline_report):
    data = json.loads(report_to_json(baseline_report))
    data["schema_version"] = 99
    with pytest.raises(FormatError, match="Unsupported report schema_version 99"):
        report_from_json(json.dumps(data))


@pytest.mark.parametrize("text, message", [("{", "not valid JSON"), ('{"schema_version": 1}', "Malformed report")])
def test_broken_report(text, message):
    with pytest.raises(FormatError, match=message):
        report_from_json(text)


def test_read_report(tmp_path, baseline_report):
    path = tmp_path / "report.json"
    path.write_text(report_to_json(baseline_report), encoding="utf-8")
    assert read_report(path) == baseline_report
    with pytest.raises(FormatError, match="Cannot read report"):
        read_report(tmp_path / "missing.json")


def test_text_report(baseline_report, case):
    text = render_text(baseline_report)
    assert "Overall verdict: [OK] passed" in text
    assert f"[OK] {case.id} (Test Case SpeedControl) on sil-baseline: passed" in text
    assert "criterion criterion-1 [Ego_speed, m/s]: fulfilled" in text
    assert "criterion criterion-2 [Average_ego_deceleration, m/s^2]: fulfilled" in text
    assert f"Trace {case.id}: sha256 {'0' * 64}" in text


def test_text_report_marks_failures(baseline_report):
    case = baseline_report.cases[0].model_copy(update={"verdict": "failed"})
    failed = baseline_report.model_copy(update={"cases": (case,), "overall_verdict": "failed"})
    text = render_text(failed)
    assert "Overall verdict: [ERROR] failed" in text
    assert ": failed" in text
