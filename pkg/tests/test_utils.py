import pytest

from utils import (
    bytes_hash,
    coerce_quantity,
    parse_any_quantity,
    parse_quantity,
    sample_count,
    si_unit,
    stable_hash,
    step_index,
    to_si,
)


def test_speed_units_are_converted_to_si():
    assert to_si(36, "km/h") == pytest.approx(10.0)
    assert parse_quantity("150 km/h", "speed") == pytest.approx(41.666666, rel=1e-6)
    assert si_unit("km/h") == "m/s"


def test_kelvin_is_converted_to_celsius():
    assert to_si(293.15, "K") == pytest.approx(20.0)


def test_quantity_with_wrong_dimension_is_rejected():
    with pytest.raises(ValueError, match="length unit"):
        parse_quantity("3 m", "speed")


def test_unknown_unit_is_rejected():
    with pytest.raises(ValueError, match="Unknown unit"):
        parse_quantity("3 furlong", "length")


def test_bare_number_needs_unit_in_strict_mode():
    assert coerce_quantity(5, "length") == 5.0
    with pytest.raises(ValueError, match="Unit tag required"):
        coerce_quantity(5, "length", strict=True)


def test_quantity_mapping_form():
    assert coerce_quantity({"value": 120, "unit": "km/h"}, "speed", strict=True) == pytest.approx(120 / 3.6)
    with pytest.raises(ValueError):
        coerce_quantity({"value": 120}, "speed")


def test_boolean_is_not_a_quantity():
    with pytest.raises(ValueError):
        coerce_quantity(True, "length")


def test_parse_any_quantity_reports_si_unit():
    value, unit = parse_any_quantity("2.0 1/s")
    assert (value, unit) == (2.0, "1/s")


@pytest.mark.parametrize(
    "time, expected",
    [(0.0, 0), (2.0, 200), (2.005, 201), (0.3, 30), (-1.0, 0)],
)
def test_step_index_is_first_sample_at_or_after_time(time, expected):
    assert step_index(time, 0.01) == expected


def test_sample_count_covers_closed_interval():
    assert sample_count(30.0, 0.01) == 3001
    assert sample_count(0.025, 0.01) == 3
    assert sample_count(1.0, 0.1) == 11


def test_hashes_are_stable():
    assert stable_hash({"a": 1, "b": [1.5, "x"]}) == stable_hash({"a": 1, "b": [1.5, "x"]})
    assert stable_hash({"a": 1}) != stable_hash({"a": 2})
    assert bytes_hash(b"trace") == bytes_hash(b"trace")
    assert len(bytes_hash(b"")) == 64
