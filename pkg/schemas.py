"""
Общие схемы: базовая неизменяемая модель, отчет валидации, каталог сигналов
"""
from typing import Dict, List, Literal, Tuple

from pydantic import BaseModel, ConfigDict


class FrozenModel(BaseModel):
    """Неизменяемый объект-значение"""

    model_config = ConfigDict(frozen=True, extra="forbid")


# Validation report schemas
class Violation(FrozenModel):
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}" if self.path else self.message


class ValidationReport(FrozenModel):
    violations: Tuple[Violation, ...] = ()

    @property
    def is_empty(self) -> bool:
        return not self.violations

    def messages(self) -> List[str]:
        return [str(v) for v in self.violations]


class ReportBuilder:
    """Накапливает нарушения с путями к полям"""

    def __init__(self, prefix: str = ""):
        self.prefix = prefix
        self._violations: List[Violation] = []

    def _join(self, path: str) -> str:
        if not self.prefix:
            return path
        if not path:
            return self.prefix
        return f"{self.prefix}.{path}"

    def add(self, path: str, message: str) -> None:
        self._violations.append(Violation(path=self._join(path), message=message))

    def extend(self, report: ValidationReport, prefix: str = "") -> None:
        for violation in report.violations:
            path = f"{prefix}.{violation.path}" if prefix and violation.path else (prefix or violation.path)
            self.add(path, violation.message)

    def build(self) -> ValidationReport:
        return ValidationReport(violations=tuple(self._violations))


# Signal catalog schemas
class SignalSpec(FrozenModel):
    name: str
    unit: str
    kind: Literal["numeric", "flag"] = "numeric"
    optional: bool = False


# Данные оценки тестового случая: фиксированный порядок колонок трассы
TRACE_COLUMNS: Tuple[str, ...] = ("time", "v_ego", "a_ego", "acc_active", "v_set", "a_target", "gap", "v_lead")

SIGNAL_CATALOG: Dict[str, SignalSpec] = {
    "time": SignalSpec(name="time", unit="s"),
    "v_ego": SignalSpec(name="v_ego", unit="m/s"),
    # замедление положительно, 0 при разгоне
    "a_ego": SignalSpec(name="a_ego", unit="m/s^2"),
    "acc_active": SignalSpec(name="acc_active", unit="flag", kind="flag"),
    "v_set": SignalSpec(name="v_set", unit="m/s"),
    "a_target": SignalSpec(name="a_target", unit="m/s^2"),
    "gap": SignalSpec(name="gap", unit="m", optional=True),
    "v_lead": SignalSpec(name="v_lead", unit="m/s", optional=True),
}
