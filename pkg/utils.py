"""
Вспомогательные функции: единицы измерения, стабильные хеши, временная сетка
"""
import hashlib
import math
import re
from typing import Annotated, Any, Dict, NamedTuple, Tuple

import pydantic_core
from pydantic import BeforeValidator, PlainSerializer, ValidationInfo


class UnitDef(NamedTuple):
    dimension: str
    multiplier: float
    divisor: float = 1.0
    offset: float = 0.0


# Канонические единицы СИ (температура в градусах Цельсия)
SI_UNITS: Dict[str, str] = {
    "length": "m",
    "time": "s",
    "speed": "m/s",
    "acceleration": "m/s^2",
    "curvature": "1/m",
    "temperature": "degC",
    "gain": "1/s",
    "gain2": "1/s^2",
    "percent": "%",
}

UNITS: Dict[str, UnitDef] = {
    "m": UnitDef("length", 1.0),
    "km": UnitDef("length", 1000.0),
    "cm": UnitDef("length", 1.0, 100.0),
    "s": UnitDef("time", 1.0),
    "ms": UnitDef("time", 1.0, 1000.0),
    "min": UnitDef("time", 60.0),
    "m/s": UnitDef("speed", 1.0),
    "km/h": UnitDef("speed", 1.0, 3.6),
    "m/s^2": UnitDef("acceleration", 1.0),
    "m/s2": UnitDef("acceleration", 1.0),
    "m/s²": UnitDef("acceleration", 1.0),
    "1/m": UnitDef("curvature", 1.0),
    "degC": UnitDef("temperature", 1.0),
    "°C": UnitDef("temperature", 1.0),
    "K": UnitDef("temperature", 1.0, 1.0, -273.15),
    "1/s": UnitDef("gain", 1.0),
    "1/s^2": UnitDef("gain2", 1.0),
    "1/s²": UnitDef("gain2", 1.0),
    "%": UnitDef("percent", 1.0),
}

_QUANTITY_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S+)\s*$")


def unit_dimension(unit: str) -> str:
    """Возвращает размерность единицы измерения"""
    try:
        return UNITS[unit].dimension
    except KeyError:
        raise ValueError(f"Unknown unit {unit!r}") from None


def si_unit(unit: str) -> str:
    """Каноническая единица СИ для той же размерности"""
    return SI_UNITS[unit_dimension(unit)]


def to_si(value: float, unit: str) -> float:
    """Переводит значение в единицы СИ"""
    spec = UNITS.get(unit)
    if spec is None:
        raise ValueError(f"Unknown unit {unit!r}")
    return float(value) * spec.multiplier / spec.divisor + spec.offset


def to_si_scale(value: float, unit: str) -> float:
    """Переводит разность (например, стандартное отклонение) в СИ, без смещения"""
    spec = UNITS[unit]
    return float(value) * spec.multiplier / spec.divisor


def parse_quantity(text: str, dimension: str) -> float:
    """Разбирает строку вида '150 km/h' и возвращает значение в СИ"""
    match = _QUANTITY_RE.match(text)
    if not match:
        raise ValueError(f"Expected '<number> <unit>', got {text!r}")
    number, unit = match.groups()
    actual = unit_dimension(unit)
    if actual != dimension:
        raise ValueError(f"Unit {unit!r} is a {actual} unit, expected {dimension}")
    return to_si(float(number), unit)


def parse_any_quantity(text: str) -> Tuple[float, str]:
    """Разбирает '<число> <единица>' любой размерности: (значение СИ, единица СИ)"""
    match = _QUANTITY_RE.match(text)
    if not match:
        raise ValueError(f"Expected '<number> <unit>', got {text!r}")
    number, unit = match.groups()
    return to_si(float(number), unit), si_unit(unit)


def coerce_quantity(value: Any, dimension: str, strict: bool = False) -> float:
    """Приводит строку, словарь {value, unit} или число к значению в СИ"""
    if isinstance(value, bool):
        raise ValueError("Boolean is not a physical quantity")
    if isinstance(value, str):
        return parse_quantity(value, dimension)
    if isinstance(value, dict):
        if set(value) != {"value", "unit"}:
            raise ValueError("Quantity mapping needs exactly 'value' and 'unit'")
        unit = str(value["unit"])
        if unit_dimension(unit) != dimension:
            raise ValueError(f"Unit {unit!r} is not a {dimension} unit")
        return to_si(float(value["value"]), unit)
    if isinstance(value, (int, float)):
        if strict:
            raise ValueError(f"Unit tag required for {dimension} quantity (e.g. '{value} {SI_UNITS[dimension]}')")
        return float(value)
    raise ValueError(f"Cannot interpret {value!r} as a {dimension} quantity")


def format_quantity(value: float, dimension: str) -> str:
    """Сериализует значение СИ с тегом единицы"""
    return f"{float(value)!r} {SI_UNITS[dimension]}"


def _quantity(dimension: str):
    def validate(value: Any, info: ValidationInfo) -> float:
        strict = bool(info.context and info.context.get("strict_units"))
        return coerce_quantity(value, dimension, strict=strict)

    return Annotated[
        float,
        BeforeValidator(validate),
        PlainSerializer(lambda v: format_quantity(v, dimension), return_type=str, when_used="json"),
    ]


Length = _quantity("length")
Duration = _quantity("time")
Speed = _quantity("speed")
Acceleration = _quantity("acceleration")
Curvature = _quantity("curvature")
Temperature = _quantity("temperature")


def stable_hash(value: Any) -> str:
    """SHA-256 от канонического JSON (порядок полей моделей фиксирован)"""
    return hashlib.sha256(pydantic_core.to_json(value)).hexdigest()


def bytes_hash(data: bytes) -> str:
    """SHA-256 от содержимого файла"""
    return hashlib.sha256(data).hexdigest()


def step_index(time: float, time_step: float) -> int:
    """Индекс первого отсчета сетки с t_s >= time"""
    return max(0, math.ceil(round(time / time_step, 9)))


def sample_count(duration: float, time_step: float) -> int:
    """Количество отсчетов на [0, duration]: floor(duration/dt) + 1"""
    return math.floor(round(duration / time_step, 9)) + 1
