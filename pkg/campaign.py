"""
Кампании: загрузка связанных файлов, проверка ссылок между ними и
выполнение тестовых процедур на конфигурациях стендов.
"""
import asyncio
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import aiofiles
from pydantic import Field, field_validator

from acc_controller import load_test_object
from bench import (
    TestBenchConfiguration,
    TestEnvironment,
    missing_capabilities,
    validate_bench_configuration,
    validate_environment,
)
from config import settings
from evaluator import CaseEvaluation, CaseMonitor, TestReport, evaluate_case, evaluate_procedure, metric_result_rows
from exceptions import ConfigurationError, FormatError, NumericalFault
from loader import (
    load_bench_configuration,
    load_environment,
    load_functional,
    load_logical,
    load_metric_catalog,
    load_product,
    load_specification,
    parse_model,
    read_document,
)
from product_model import ProductModel, validate_product
from report import render_text, report_to_json
from scenario_model import FunctionalScenario, LogicalScenario, validate_scenario_catalog
from schemas import FrozenModel, ReportBuilder, ValidationReport
from simulation import ExecutionTrace, run_test_case
from specification import TestCase, TestProcedure, TestSpecification, metric_catalog, validate_specification
from trace_io import metric_results_to_csv, trace_to_csv
from utils import Duration, bytes_hash

logger = logging.getLogger(__name__)

VERDICT_EXIT_CODES = {"passed": 0, "failed": 1, "skipped": 1, "invalid_trace": 3}


# Campaign schemas
class CampaignConfig(FrozenModel):
    id: str
    specification: Path
    environment: Path
    bench_configurations: Tuple[Path, ...] = Field(min_length=1)
    scenario_files: Tuple[Path, ...] = ()
    metric_catalogs: Tuple[Path, ...] = ()
    product: Optional[Path] = None
    # конфигурация для процедур без bench_configs
    default_bench_configuration: Optional[str] = None
    output_dir: Path = Path(settings.default_output_dir)
    time_step: Optional[Duration] = None
    parallelism: int = Field(default=settings.default_parallelism, ge=1)

    @field_validator("time_step")
    @classmethod
    def positive_time_step(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not value > 0:
            raise ValueError("time_step > 0")
        return value


@dataclass
class LoadedCampaign:
    config: CampaignConfig
    specification: TestSpecification
    environment: TestEnvironment
    configurations: Dict[str, TestBenchConfiguration]
    functional: List[FunctionalScenario] = field(default_factory=list)
    logical: List[LogicalScenario] = field(default_factory=list)
    product: Optional[ProductModel] = None


@dataclass
class CaseRun:
    case: TestCase
    trace: ExecutionTrace
    evaluation: CaseEvaluation


@dataclass
class ProcedureOutcome:
    report: TestReport
    runs: List[CaseRun]
    trace_paths: List[Path]
    report_paths: List[Path]

    @property
    def exit_code(self) -> int:
        return VERDICT_EXIT_CODES[self.report.overall_verdict]


def load_campaign(path: Path) -> LoadedCampaign:
    """Загружает кампанию; пути внутри файла считаются от его каталога"""
    path = Path(path)
    _, body = read_document(path, "campaign")
    config = parse_model(CampaignConfig, body)
    base = path.parent

    def resolve(reference: Path) -> Path:
        resolved = reference if reference.is_absolute() else base / reference
        if not resolved.exists():
            raise FormatError(f"{path}: referenced file {reference} does not exist")
        return resolved

    specification = load_specification(resolve(config.specification))
    extra_metrics = [metric for ref in config.metric_catalogs for metric in load_metric_catalog(resolve(ref))]
    if extra_metrics:
        specification = specification.model_copy(update={"metrics": specification.metrics + tuple(extra_metrics)})

    configurations: Dict[str, TestBenchConfiguration] = {}
    for reference in config.bench_configurations:
        configuration = load_bench_configuration(resolve(reference))
        if configuration.id in configurations:
            raise FormatError(f"{path}: duplicate bench configuration id {configuration.id!r}")
        configurations[configuration.id] = configuration

    functional, logical = [], []
    for reference in config.scenario_files:
        kind, _ = read_document(resolve(reference))
        if kind == "functional_scenario":
            functional.append(load_functional(resolve(reference)))
        elif kind == "logical_scenario":
            logical.append(load_logical(resolve(reference)))
        else:
            raise FormatError(f"{path}: scenario file {reference} holds a {kind} document")

    if config.output_dir.is_absolute():
        output_dir = config.output_dir
    else:
        output_dir = base / config.output_dir
    return LoadedCampaign(
        config=config.model_copy(update={"output_dir": output_dir}),
        specification=specification,
        environment=load_environment(resolve(config.environment)),
        configurations=configurations,
        functional=functional,
        logical=logical,
        product=load_product(resolve(config.product)) if config.product else None,
    )


def validate_campaign(loaded: LoadedCampaign) -> ValidationReport:
    """Проверка всех документов кампании и ссылок между ними"""
    builder = ReportBuilder()
    spec = loaded.specification
    builder.extend(validate_specification(spec, loaded.configurations), "specification")
    builder.extend(validate_environment(loaded.environment), "environment")

    for config_id, configuration in loaded.configurations.items():
        scenarios = [
            spec.case(case_id).scenario
            for procedure in spec.procedure_spec
            if config_id in procedure.bench_configs
            for case_id in procedure.cases
            if spec.case(case_id) is not None
        ]
        path = f"bench_configurations.{config_id}"
        builder.extend(validate_bench_configuration(configuration, scenarios[0] if scenarios else None), path)
        bench = loaded.environment.bench(configuration.bench)
        if bench is None:
            builder.add(f"{path}.bench", f"unknown test bench {configuration.bench!r}")
            continue
        missing = missing_capabilities(configuration, bench)
        if missing:
            builder.add(f"{path}.bench", f"bench {bench.id!r} lacks capabilities: {', '.join(missing)}")

    if loaded.functional or loaded.logical:
        concrete = [case.scenario for case in spec.case_spec]
        builder.extend(validate_scenario_catalog(loaded.functional, loaded.logical, concrete), "scenarios")
    if loaded.product is not None:
        criterion_ids = {c.id for case in spec.case_spec for c in case.criteria}
        criterion_ids |= {c.id for p in spec.procedure_spec for c in p.cross_case_criteria}
        product = loaded.product
        report = validate_product(
            product.functions,
            product.items,
            product.definitions,
            product.requirements,
            criterion_ids=criterion_ids,
            functional_scenario_ids=[f.id for f in loaded.functional] if loaded.functional else None,
        )
        builder.extend(report, "product")
    return builder.build()


class CampaignRunner:
    """Выполняет тестовые процедуры кампании"""

    def __init__(
        self,
        loaded: LoadedCampaign,
        output_dir: Optional[Path] = None,
        time_step: Optional[float] = None,
        parallelism: Optional[int] = None,
    ):
        self.loaded = loaded
        self.output_dir = Path(output_dir) if output_dir is not None else loaded.config.output_dir
        self.time_step = time_step if time_step is not None else loaded.config.time_step
        self.parallelism = parallelism if parallelism is not None else loaded.config.parallelism
        if self.parallelism < 1:
            raise ConfigurationError("parallelism must be ≥ 1")
        if self.time_step is not None and not self.time_step > 0:
            raise ConfigurationError("time step must be > 0")
        self.metrics = metric_catalog(loaded.specification.metrics)

    def resolve_configuration(self, procedure: TestProcedure) -> TestBenchConfiguration:
        """Конфигурация стенда для процедуры с проверкой возможностей стенда"""
        configurations = self.loaded.configurations
        if procedure.bench_configs:
            config_id = procedure.bench_configs[0]
        else:
            config_id = self.loaded.config.default_bench_configuration or next(iter(configurations))
        configuration = configurations.get(config_id)
        if configuration is None:
            raise ConfigurationError(f"Procedure {procedure.id!r} refers to unknown bench configuration {config_id!r}")

        bench = self.loaded.environment.bench(configuration.bench)
        if bench is None:
            raise ConfigurationError(f"Configuration {config_id!r} refers to unknown test bench {configuration.bench!r}")
        missing = missing_capabilities(configuration, bench)
        if missing:
            raise ConfigurationError(
                f"Test bench {bench.id!r} cannot run configuration {config_id!r}: "
                f"missing capabilities {', '.join(missing)}"
            )
        report = validate_bench_configuration(configuration)
        if not report.is_empty:
            raise ConfigurationError(f"Configuration {config_id!r} is invalid: " + "; ".join(report.messages()))
        if self.time_step is not None:
            configuration = configuration.with_time_step(self.time_step)
        return configuration

    def run_case(self, configuration: TestBenchConfiguration, case: TestCase) -> CaseRun:
        """Один прогон тестового случая с инкрементальной оценкой"""
        adapter = configuration.element("test_object_adapter")
        if adapter is None:
            raise ConfigurationError(f"Configuration {configuration.id!r} has no test_object_adapter element")
        test_object = load_test_object(adapter)
        monitor = CaseMonitor(case, configuration.time_step, self.metrics, configuration.id)
        try:
            trace = run_test_case(configuration, case, test_object, observer=monitor, record_scenes=False)
            evaluation = monitor.finish(trace.valid)
        except NumericalFault as e:
            logger.error(f"[ERROR] {case.id}: {e}")
            trace = e.trace
            evaluation = evaluate_case(case, trace, self.metrics)
        return CaseRun(case=case, trace=trace, evaluation=evaluation)

    async def _write(self, path: Path, text: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        async with aiofiles.open(path, "w", encoding="utf-8", newline="") as f:
            await f.write(text)

    async def run_procedure(self, procedure_id: str) -> ProcedureOutcome:
        """Выполняет процедуру: случаи параллельно, сборка отчета последовательно"""
        spec = self.loaded.specification
        procedure = spec.procedure(procedure_id)
        if procedure is None:
            raise ConfigurationError(f"Unknown test procedure {procedure_id!r}")
        cases = []
        for case_id in procedure.cases:
            case = spec.case(case_id)
            if case is None:
                raise ConfigurationError(f"Procedure {procedure.id!r} refers to unknown test case {case_id!r}")
            cases.append(case)
        configuration = self.resolve_configuration(procedure)

        for action in procedure.setup:
            logger.info(f"[INFO] Setup: {action.action} {action.description}".rstrip())
        logger.info(
            f"[INFO] Procedure {procedure.id}: {len(cases)} cases on {configuration.id} "
            f"(parallelism {self.parallelism})"
        )
        semaphore = asyncio.Semaphore(self.parallelism)

        async def worker(case: TestCase) -> CaseRun:
            async with semaphore:
                return await asyncio.to_thread(self.run_case, configuration, case)

        runs = await asyncio.gather(*(worker(case) for case in cases))

        trace_paths, hashes = [], {}
        for run in runs:
            text = trace_to_csv(run.trace)
            trace_path = self.output_dir / "traces" / f"{run.case.id}.csv"
            await self._write(trace_path, text)
            trace_paths.append(trace_path)
            hashes[run.case.id] = bytes_hash(text.encode("utf-8"))

        report = evaluate_procedure(
            procedure,
            {run.case.id: run.evaluation for run in runs},
            {run.case.id: run.trace for run in runs},
            hashes,
            cases={case.id: case for case in cases},
            metrics=self.metrics,
        )
        report_dir = self.output_dir / "reports"
        report_paths = [report_dir / f"{procedure.id}.json", report_dir / f"{procedure.id}.txt"]
        await self._write(report_paths[0], report_to_json(report))
        await self._write(report_paths[1], render_text(report))
        await self._write(report_dir / f"{procedure.id}-metrics.csv", metric_results_to_csv(metric_result_rows(report)))

        for action in procedure.wrapup:
            logger.info(f"[INFO] Wrap-up: {action.action} {action.description}".rstrip())
        logger.info(f"[OK] Report written to {report_paths[0]}")
        return ProcedureOutcome(report=report, runs=list(runs), trace_paths=trace_paths, report_paths=report_paths)

    def run(self, procedure_id: str) -> ProcedureOutcome:
        return asyncio.run(self.run_procedure(procedure_id))
