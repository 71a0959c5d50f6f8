"""
Экспорт и импорт трасс и результатов метрик в колоночном CSV (единицы СИ)
"""
import io
import logging
from pathlib import Path
from typing import Dict, Sequence, Union

import pandas as pd

from exceptions import FormatError
from schemas import TRACE_COLUMNS
from simulation import ExecutionTrace

logger = logging.getLogger(__name__)

METADATA_KEYS = ("scenario_id", "case_id", "config_id", "time_step", "loop_mode", "valid", "fault")
METRIC_COLUMNS = ("metric", "time", "value", "unit", "fulfillment")


def _float_format(value: float) -> str:
    return repr(float(value))


def _metadata_line(trace: ExecutionTrace) -> str:
    values = {
        "scenario_id": trace.scenario_id,
        "case_id": trace.case_id,
        "config_id": trace.config_id,
        "time_step": repr(trace.time_step),
        "loop_mode": trace.loop_mode,
        "valid": "true" if trace.valid else "false",
        "fault": (trace.fault or "").replace(";", ","),
    }
    return "# " + "; ".join(f"{key}={values[key]}" for key in METADATA_KEYS)


def trace_to_csv(trace: ExecutionTrace) -> str:
    """Сериализует данные оценки трассы: строка метаданных, заголовок, отсчеты"""
    frame = pd.DataFrame({name: list(trace.evaluation_data.get(name, ())) for name in TRACE_COLUMNS})
    frame["acc_active"] = frame["acc_active"].astype(int)
    body = frame.to_csv(index=False, float_format=_float_format, na_rep="", lineterminator="\n")
    return _metadata_line(trace) + "\n" + body


def _parse_metadata(line: str) -> Dict[str, str]:
    if not line.startswith("#"):
        raise FormatError("Trace file must start with a '# key=value; ...' metadata line")
    metadata = {}
    for item in line[1:].split(";"):
        key, sep, value = item.strip().partition("=")
        if sep:
            metadata[key] = value
    missing = [key for key in ("scenario_id", "case_id", "time_step") if key not in metadata]
    if missing:
        raise FormatError(f"Trace metadata lacks {', '.join(missing)}")
    return metadata


def trace_from_csv(text: str) -> ExecutionTrace:
    """Восстанавливает трассу (без снимков сцен) из CSV"""
    first, _, body = text.partition("\n")
    metadata = _parse_metadata(first.strip())
    try:
        frame = pd.read_csv(io.StringIO(body), float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FormatError(f"Unreadable trace table: {e}") from e
    for name in TRACE_COLUMNS:
        if name not in frame.columns:
            raise FormatError(f"Trace is missing column {name!r}")
    try:
        data = {name: tuple(float(v) for v in frame[name].astype(float)) for name in TRACE_COLUMNS}
        time_step = float(metadata["time_step"])
    except ValueError as e:
        raise FormatError(f"Non-numeric trace value: {e}") from e
    return ExecutionTrace(
        scenario_id=metadata["scenario_id"],
        case_id=metadata["case_id"],
        config_id=metadata.get("config_id", ""),
        time_step=time_step,
        loop_mode=metadata.get("loop_mode", "closed"),
        valid=metadata.get("valid", "true") == "true",
        fault=metadata.get("fault") or None,
        evaluation_data=data,
    )


def read_trace(path: Union[str, Path]) -> ExecutionTrace:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(f"Cannot read trace {path}: {e}") from e
    trace = trace_from_csv(text)
    logger.debug(f"Read trace {path}: {len(trace)} samples of {trace.case_id}")
    return trace


def metric_results_to_csv(rows: Sequence[Dict[str, object]]) -> str:
    """Результаты метрик в том же колоночном формате, что и трассы"""
    frame = pd.DataFrame(list(rows), columns=list(METRIC_COLUMNS))
    return frame.to_csv(index=False, float_format=_float_format, lineterminator="\n")
