"""
Исключения предметной области.

Валидаторы не бросают исключений: нарушения инвариантов возвращаются
в ValidationReport. Исключения описывают нарушение контракта операции.
"""
from __future__ import annotations

from typing import TYPE_CHECKING, FrozenSet, Iterable, Optional

if TYPE_CHECKING:
    from simulation import ExecutionTrace


class ScenarioTestError(Exception):
    """Базовое исключение"""


class FormatError(ScenarioTestError):
    """Файл не читается, неизвестная версия формата или нет колонки в трассе"""


class ConfigurationError(ScenarioTestError):
    """Ошибка конфигурации стенда, кампании или сценария"""


class MissingParameter(ScenarioTestError):
    """В конкретном сценарии нет значения параметра логического сценария"""

    def __init__(self, parameter: str, scenario_id: str):
        super().__init__(f"Concrete scenario {scenario_id!r} has no value for parameter {parameter!r}")
        self.parameter = parameter
        self.scenario_id = scenario_id


class InvalidLogical(ScenarioTestError):
    """Логический сценарий не прошел валидацию"""

    def __init__(self, scenario_id: str, violations: Iterable[str]):
        self.violations = tuple(violations)
        super().__init__(f"Logical scenario {scenario_id!r} is invalid: " + "; ".join(self.violations))


class EmptyCriteria(ScenarioTestError):
    """Тестовый случай без критериев оценки"""


class ConditionSyntaxError(ScenarioTestError):
    """Синтаксическая ошибка в выражении условия"""

    def __init__(self, message: str, position: int, expected: Iterable[str] = ()):
        self.position = position
        self.expected: FrozenSet[str] = frozenset(expected)
        detail = f" (expected one of: {', '.join(sorted(self.expected))})" if self.expected else ""
        super().__init__(f"{message} at position {position}{detail}")


class UnknownSignal(ScenarioTestError):
    """Сигнал отсутствует в каталоге сигналов"""

    def __init__(self, signal: str):
        super().__init__(f"Unknown signal {signal!r}")
        self.signal = signal


class MissingSignal(ScenarioTestError):
    """В трассе нет данных, необходимых метрике"""


class PortMismatch(ScenarioTestError):
    """Порт тестового объекта не совпадает со схемой адаптера"""


class NumericalFault(ScenarioTestError):
    """Нечисловое состояние во время прогона; содержит частичную трассу"""

    def __init__(self, message: str, trace: Optional["ExecutionTrace"] = None):
        super().__init__(message)
        self.trace = trace


class TraceMismatch(ScenarioTestError):
    """Трасса относится к другому сценарию"""


class IncompleteInput(ScenarioTestError):
    """Нет оценки для одного из случаев процедуры"""
