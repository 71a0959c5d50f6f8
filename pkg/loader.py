"""
Загрузка и выгрузка файлов сценариев, спецификаций и конфигураций (YAML).

Каждый документ содержит format_version и kind; физические величины
обязательно указываются с единицами измерения.
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Type, TypeVar, Union

import yaml
from pydantic import BaseModel

from bench import TestBenchConfiguration, TestEnvironment
from config import settings
from exceptions import FormatError
from product_model import ProductModel
from scenario_model import (
    ConcreteScenario,
    FunctionalScenario,
    LogicalScenario,
    MovableObject,
    RealWorldTestDrive,
    Scenery,
    SelfRepresentation,
    initial_scene,
)
from specification import (
    EvaluationCriterion,
    EvaluationMetric,
    PlanDocument,
    TestCase,
    TestDesignSpec,
    TestPlan,
    TestProcedure,
    TestSpecification,
    build_test_case,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
ModelT = TypeVar("ModelT", bound=BaseModel)

STRICT_UNITS = {"strict_units": True}
DOCUMENT_KINDS = (
    "functional_scenario",
    "logical_scenario",
    "concrete_scenario",
    "test_drive",
    "product",
    "metric_catalog",
    "test_specification",
    "test_environment",
    "bench_configuration",
    "campaign",
)


def read_document(path: PathLike, expected_kind: Optional[str] = None) -> Tuple[str, Dict[str, Any]]:
    """Читает YAML-документ и проверяет format_version и kind"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(f"Cannot read {path}: {e}") from e
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise FormatError(f"{path}: invalid YAML: {e}") from e
    if not isinstance(data, dict):
        raise FormatError(f"{path}: document must be a mapping")

    version = data.get("format_version")
    if version != settings.format_version:
        raise FormatError(f"{path}: unsupported format_version {version!r} (expected {settings.format_version})")
    kind = data.get("kind")
    if kind not in DOCUMENT_KINDS:
        raise FormatError(f"{path}: unknown document kind {kind!r}")
    if expected_kind is not None and kind != expected_kind:
        raise FormatError(f"{path}: expected a {expected_kind} document, got {kind}")
    body = {key: value for key, value in data.items() if key not in ("format_version", "kind")}
    return kind, body


def parse_model(model: Type[ModelT], data: Any) -> ModelT:
    """Валидация с обязательными единицами для физических величин"""
    return model.model_validate(data, context=STRICT_UNITS)


def _concrete(data: Any) -> ConcreteScenario:
    # короткая форма: scenery + objects, сцена t = 0 строится из начальных состояний
    if isinstance(data, dict) and "initial_scene" not in data and "scenery" in data:
        data = dict(data)
        scenery = parse_model(Scenery, data.pop("scenery"))
        objects = tuple(parse_model(MovableObject, item) for item in data.get("objects", ()))
        representations = tuple(
            parse_model(SelfRepresentation, item) for item in data.pop("self_representations", ())
        )
        data["objects"] = objects
        data["initial_scene"] = initial_scene(scenery, objects, representations, data.pop("observer", None))
    return parse_model(ConcreteScenario, data)


def load_functional(path: PathLike) -> FunctionalScenario:
    _, body = read_document(path, "functional_scenario")
    return parse_model(FunctionalScenario, body)


def load_logical(path: PathLike) -> LogicalScenario:
    _, body = read_document(path, "logical_scenario")
    return parse_model(LogicalScenario, body)


def load_concrete(path: PathLike) -> ConcreteScenario:
    _, body = read_document(path, "concrete_scenario")
    return _concrete(body)


def load_drive(path: PathLike) -> RealWorldTestDrive:
    _, body = read_document(path, "test_drive")
    body = dict(body)
    body["recorded_scenarios"] = tuple(_concrete(item) for item in body.get("recorded_scenarios", ()))
    return parse_model(RealWorldTestDrive, body)


def load_product(path: PathLike) -> ProductModel:
    _, body = read_document(path, "product")
    return parse_model(ProductModel, body)


def load_metric_catalog(path: PathLike) -> Tuple[EvaluationMetric, ...]:
    _, body = read_document(path, "metric_catalog")
    return tuple(parse_model(EvaluationMetric, item) for item in body.get("metrics", ()))


def load_environment(path: PathLike) -> TestEnvironment:
    _, body = read_document(path, "test_environment")
    return parse_model(TestEnvironment, body)


def load_bench_configuration(path: PathLike) -> TestBenchConfiguration:
    _, body = read_document(path, "bench_configuration")
    return parse_model(TestBenchConfiguration, body)


def _resolve(base: Path, reference: str) -> Path:
    path = Path(reference)
    return path if path.is_absolute() else base / path


def _build_cases(
    entries: List[Mapping[str, Any]],
    scenarios: Mapping[str, ConcreteScenario],
    criteria: Mapping[str, EvaluationCriterion],
    path: Path,
) -> List[TestCase]:
    cases = []
    for entry in entries:
        scenario_id = entry.get("scenario")
        if scenario_id not in scenarios:
            raise FormatError(f"{path}: test case refers to unknown scenario {scenario_id!r}")
        selected = []
        for ref in entry.get("criteria", ()):
            if ref not in criteria:
                raise FormatError(f"{path}: test case for {scenario_id!r} refers to unknown criterion {ref!r}")
            selected.append(criteria[ref])
        case = build_test_case(scenarios[scenario_id], selected, entry.get("name"))
        if entry.get("id"):
            case = case.model_copy(update={"id": str(entry["id"])})
        cases.append(case)
    return cases


def _case_ref(ref: str, cases: List[TestCase]) -> str:
    # ссылка на случай по id или по id сценария
    for case in cases:
        if case.id == ref:
            return ref
    matches = [case.id for case in cases if case.scenario.id == ref]
    return matches[0] if len(matches) == 1 else ref


def load_specification(path: PathLike) -> TestSpecification:
    """Спецификация тестов; сценарии и каталоги метрик подключаются по относительным путям"""
    path = Path(path)
    _, body = read_document(path, "test_specification")
    base = path.parent

    scenarios: Dict[str, ConcreteScenario] = {}
    for reference in body.get("scenarios", ()):
        scenario = load_concrete(_resolve(base, reference))
        scenarios[scenario.id] = scenario
    for item in body.get("inline_scenarios", ()):
        scenario = _concrete(item)
        scenarios[scenario.id] = scenario

    metrics: List[EvaluationMetric] = []
    for reference in body.get("metric_catalogs", ()):
        metrics.extend(load_metric_catalog(_resolve(base, reference)))
    metrics.extend(parse_model(EvaluationMetric, item) for item in body.get("metrics", ()))

    criteria = {}
    for item in body.get("criteria", ()):
        criterion = parse_model(EvaluationCriterion, item)
        criteria[criterion.id] = criterion

    cases = _build_cases(body.get("cases", ()), scenarios, criteria, path)
    procedures = []
    for item in body.get("procedures", ()):
        item = dict(item)
        item["cases"] = [_case_ref(str(ref), cases) for ref in item.get("cases", ())]
        cross = []
        for ref in item.get("cross_case_criteria", ()):
            if isinstance(ref, str):
                if ref not in criteria:
                    raise FormatError(f"{path}: procedure {item.get('id')!r} refers to unknown criterion {ref!r}")
                cross.append(criteria[ref])
            else:
                cross.append(parse_model(EvaluationCriterion, ref))
        item["cross_case_criteria"] = cross
        procedures.append(parse_model(TestProcedure, item))

    spec = TestSpecification(
        design=parse_model(TestDesignSpec, body.get("design", {})),
        case_spec=tuple(cases),
        procedure_spec=tuple(procedures),
        metrics=tuple(metrics),
        plan=parse_model(TestPlan, body["plan"]) if body.get("plan") else None,
        documents=tuple(parse_model(PlanDocument, item) for item in body.get("documents", ())),
    )
    logger.debug(f"Loaded specification {path}: {len(cases)} cases, {len(procedures)} procedures")
    return spec


def load_any(path: PathLike) -> Tuple[str, Any]:
    """Загружает документ любого вида, кроме кампании (её загружает campaign)"""
    kind, _ = read_document(path)
    loaders = {
        "functional_scenario": load_functional,
        "logical_scenario": load_logical,
        "concrete_scenario": load_concrete,
        "test_drive": load_drive,
        "product": load_product,
        "metric_catalog": load_metric_catalog,
        "test_specification": load_specification,
        "test_environment": load_environment,
        "bench_configuration": load_bench_configuration,
    }
    if kind not in loaders:
        return kind, None
    return kind, loaders[kind](path)


def dump_concrete(scenario: ConcreteScenario) -> str:
    """Детерминированный YAML конкретного сценария"""
    document = {"format_version": settings.format_version, "kind": "concrete_scenario"}
    document.update(scenario.model_dump(mode="json"))
    return yaml.safe_dump(document, sort_keys=False, allow_unicode=True)
