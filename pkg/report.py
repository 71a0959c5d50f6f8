"""
Модуль для формирования отчетов о тестировании: машиночитаемый JSON
и текстовое представление через шаблон Jinja2
"""
import json
import logging
from pathlib import Path
from typing import Union

from jinja2 import Environment, FileSystemLoader, StrictUndefined
from pydantic import ValidationError

from config import settings
from evaluator import TestReport
from exceptions import FormatError

logger = logging.getLogger(__name__)

VERDICT_MARKERS = {
    "passed": "[OK]",
    "failed": "[ERROR]",
    "skipped": "[WARNING]",
    "invalid_trace": "[ERROR]",
}


def _environment() -> Environment:
    env = Environment(
        loader=FileSystemLoader(str(settings.templates_dir)),
        undefined=StrictUndefined,
        keep_trailing_newline=True,
        trim_blocks=True,
        lstrip_blocks=True,
    )
    env.filters["num"] = lambda value: "-" if value is None else f"{value:.4g}"
    env.filters["marker"] = lambda verdict: VERDICT_MARKERS.get(verdict, "[INFO]")
    return env


def report_to_json(report: TestReport) -> str:
    """Стабильная сериализация: одинаковые входные данные дают одинаковые байты"""
    return report.model_dump_json(indent=2) + "\n"


def report_from_json(text: str) -> TestReport:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"Report is not valid JSON: {e}") from e
    if data.get("schema_version") != settings.report_schema_version:
        raise FormatError(
            f"Unsupported report schema_version {data.get('schema_version')!r} "
            f"(expected {settings.report_schema_version})"
        )
    try:
        return TestReport.model_validate(data)
    except ValidationError as e:
        raise FormatError(f"Malformed report: {e}") from e


def read_report(path: Union[str, Path]) -> TestReport:
    path = Path(path)
    try:
        return report_from_json(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise FormatError(f"Cannot read report {path}: {e}") from e


def render_text(report: TestReport) -> str:
    """Текстовый отчет для человека"""
    template = _environment().get_template("report.txt.j2")
    return template.render(report=report, app_name=settings.app_name)
