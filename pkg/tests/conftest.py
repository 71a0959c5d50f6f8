import math
import shutil
from pathlib import Path
from typing import Callable

import pytest

from acc_controller import load_test_object
from evaluator import evaluate_case, evaluate_procedure
from loader import load_bench_configuration, load_concrete, load_logical, load_specification
from schemas import TRACE_COLUMNS
from simulation import ExecutionTrace, run_test_case

BUNDLE = Path(__file__).resolve().parent.parent / "campaigns" / "speedcontrol"


@pytest.fixture(scope="session")
def bundle_dir() -> Path:
    return BUNDLE


@pytest.fixture
def bundle_copy(tmp_path) -> Path:
    """Копия примера кампании во временном каталоге (прогоны пишут в out/)"""
    target = tmp_path / "speedcontrol"
    shutil.copytree(BUNDLE, target, ignore=shutil.ignore_patterns("out", "out-*"))
    return target


@pytest.fixture(scope="session")
def spec():
    return load_specification(BUNDLE / "spec.yaml")


@pytest.fixture(scope="session")
def case(spec):
    return spec.case_spec[0]


@pytest.fixture(scope="session")
def logical():
    return load_logical(BUNDLE / "logical.yaml")


@pytest.fixture(scope="session")
def concrete():
    return load_concrete(BUNDLE / "concrete_speedcontrol.yaml")


@pytest.fixture(scope="session")
def baseline_config():
    return load_bench_configuration(BUNDLE / "bench_baseline.yaml")


@pytest.fixture(scope="session")
def aggressive_config():
    return load_bench_configuration(BUNDLE / "bench_aggressive.yaml")


def acc_for(config):
    return load_test_object(config.element("test_object_adapter"))


@pytest.fixture
def acc_factory():
    return acc_for


@pytest.fixture(scope="session")
def baseline_trace(baseline_config, case):
    return run_test_case(baseline_config, case, acc_for(baseline_config))


@pytest.fixture(scope="session")
def aggressive_trace(aggressive_config, case):
    return run_test_case(aggressive_config, case, acc_for(aggressive_config), record_scenes=False)


@pytest.fixture(scope="session")
def baseline_evaluation(case, baseline_trace):
    return evaluate_case(case, baseline_trace)


@pytest.fixture(scope="session")
def baseline_report(spec, case, baseline_trace, baseline_evaluation):
    procedure = spec.procedure_spec[0]
    return evaluate_procedure(
        procedure,
        {case.id: baseline_evaluation},
        {case.id: baseline_trace},
        {case.id: "0" * 64},
        cases={case.id: case},
    )


@pytest.fixture
def make_trace() -> Callable[..., ExecutionTrace]:
    """Трасса из заданных колонок; остальные колонки заполняются по умолчанию"""

    def factory(time_step: float = 0.1, scenario_id: str = "S", case_id: str = "S-case", **columns):
        count = len(next(iter(columns.values())))
        defaults = {"gap": math.nan, "v_lead": math.nan}
        data = {}
        for name in TRACE_COLUMNS:
            if name == "time":
                values = columns.get("time", [i * time_step for i in range(count)])
            else:
                values = columns.get(name, [defaults.get(name, 0.0)] * count)
            data[name] = tuple(float(v) for v in values)
        return ExecutionTrace(
            scenario_id=scenario_id,
            case_id=case_id,
            config_id="manual",
            time_step=time_step,
            loop_mode="closed",
            evaluation_data=data,
        )

    return factory
