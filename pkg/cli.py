"""
Командная строка: проверка файлов, конкретизация, запуск кампаний,
оценка записанных трасс и вывод отчетов.

Коды выхода: 0 успех, 1 ошибка оценки или нарушения, 2 ошибка
конфигурации/спецификации/файла, 3 сбой выполнения.
"""
import logging
import sys
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import click
from pydantic import ValidationError

from bench import validate_bench_configuration, validate_environment
from campaign import VERDICT_EXIT_CODES, CampaignRunner, load_campaign, validate_campaign
from concretizer import (
    BoundaryStrategy,
    ConcretizationConfig,
    GridStrategy,
    UniformRandomStrategy,
    assign_drive,
    concretize,
)
from config import settings
from evaluator import evaluate_case, evaluate_procedure
from exceptions import EmptyCriteria, InvalidLogical, ScenarioTestError
from loader import dump_concrete, load_any, load_drive, load_logical, load_specification, read_document
from product_model import validate_product
from report import read_report, render_text, report_to_json
from scenario_model import validate_concrete, validate_drive, validate_functional, validate_logical
from specification import metric_catalog, validate_metric_catalog, validate_specification
from trace_io import read_trace
from utils import bytes_hash

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def setup_logging(level: str) -> None:
    logging.basicConfig(level=level.upper(), format=settings.log_format, stream=sys.stderr)


def _collect(paths: Sequence[str]) -> List[Path]:
    files = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            files.extend(sorted(p for p in path.rglob("*.yaml") if p.is_file()))
        else:
            files.append(path)
    return files


def _pydantic_lines(error: ValidationError) -> List[str]:
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return lines


def _validate_loaded(kind: str, obj, logicals: Dict[str, object]) -> List[str]:
    if kind == "functional_scenario":
        report = validate_functional(obj)
    elif kind == "logical_scenario":
        report = validate_logical(obj)
    elif kind == "concrete_scenario":
        report = validate_concrete(obj, logicals.get(obj.parent) if obj.parent else None)
    elif kind == "test_drive":
        report = validate_drive(obj)
    elif kind == "product":
        report = validate_product(obj.functions, obj.items, obj.definitions, obj.requirements)
    elif kind == "metric_catalog":
        report = validate_metric_catalog(obj)
    elif kind == "test_specification":
        report = validate_specification(obj)
    elif kind == "test_environment":
        report = validate_environment(obj)
    elif kind == "bench_configuration":
        report = validate_bench_configuration(obj)
    else:
        report = validate_campaign(obj)
    return [str(violation) for violation in report.violations]


@click.group()
@click.option("--log-level", default=settings.log_level, show_default=True, help="Logging level (stderr)")
def cli(log_level: str) -> None:
    """Scenario-based testing of automated driving functions."""
    setup_logging("DEBUG" if settings.debug else log_level)


@cli.command()
@click.argument("paths", nargs=-1, required=True)
def validate(paths: Tuple[str, ...]) -> None:
    """Validate scenario, specification, bench and campaign files."""
    loaded: List[Tuple[Path, str, object]] = []
    exit_code = EXIT_OK
    violations: List[str] = []
    for path in _collect(paths):
        try:
            kind, _ = read_document(path)
            obj = load_campaign(path) if kind == "campaign" else load_any(path)[1]
            loaded.append((path, kind, obj))
        except ValidationError as e:
            violations.extend(f"{path}:{line}" for line in _pydantic_lines(e))
        except EmptyCriteria as e:
            violations.append(f"{path}:cases: {e}")
        except ScenarioTestError as e:
            click.echo(f"{path}: {e}", err=True)
            exit_code = EXIT_CONFIG

    logicals = {obj.id: obj for _, kind, obj in loaded if kind == "logical_scenario"}
    for path, kind, obj in loaded:
        violations.extend(f"{path}:{line}" for line in _validate_loaded(kind, obj, logicals))

    for line in violations:
        click.echo(line)
    if exit_code == EXIT_OK and violations:
        exit_code = EXIT_FAILED
    logger.info(f"[INFO] Validated {len(loaded)} documents, {len(violations)} violations")
    sys.exit(exit_code)


@cli.command(name="concretize")
@click.argument("logical_path", type=click.Path(dir_okay=False))
@click.option("--strategy", type=click.Choice(["grid", "uniform_random", "boundary"]), default="boundary",
              show_default=True)
@click.option("--points", type=int, default=3, show_default=True, help="Grid points per parameter")
@click.option("--count", type=int, default=10, show_default=True, help="Number of random samples")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--include-center", is_flag=True, help="Add the all-midpoint scenario (boundary)")
@click.option("--prefix", default="", help="Scenario id prefix (default: logical scenario id)")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=settings.default_output_dir,
              show_default=True)
def concretize_cmd(logical_path, strategy, points, count, seed, include_center, prefix, out_dir) -> None:
    """Concretize a logical scenario into scenario files."""
    try:
        logical = load_logical(logical_path)
        if strategy == "grid":
            chosen = GridStrategy(points_per_parameter=points)
        elif strategy == "uniform_random":
            chosen = UniformRandomStrategy(count=count, seed=seed)
        else:
            chosen = BoundaryStrategy(include_center=include_center)
        scenarios = concretize(logical, ConcretizationConfig(strategy=chosen, id_prefix=prefix))
    except ValidationError as e:
        for line in _pydantic_lines(e):
            click.echo(f"{logical_path}:{line}")
        sys.exit(EXIT_FAILED)
    except InvalidLogical as e:
        for message in e.violations:
            click.echo(f"{logical_path}:{message}")
        sys.exit(EXIT_FAILED)
    except ScenarioTestError as e:
        click.echo(f"{logical_path}: {e}", err=True)
        sys.exit(EXIT_CONFIG)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for scenario in scenarios:
        (out / f"{scenario.id}.yaml").write_text(dump_concrete(scenario), encoding="utf-8")
    click.echo(f"{len(scenarios)} scenarios written to {out}")
    sys.exit(EXIT_OK)


def _emit(report, output_format: str) -> None:
    click.echo(report_to_json(report) if output_format == "machine" else render_text(report), nl=False)


@cli.command()
@click.argument("campaign_path", type=click.Path(dir_okay=False))
@click.option("--procedure", "procedure_ids", multiple=True, help="Procedure id (default: all)")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Output directory")
@click.option("--dt", type=float, default=None, help="Time step override [s]")
@click.option("--parallelism", type=int, default=None)
@click.option("--format", "output_format", type=click.Choice(["machine", "text"]), default="text",
              show_default=True)
def run(campaign_path, procedure_ids, out_dir, dt, parallelism, output_format) -> None:
    """Run test procedures of a campaign and write traces and reports."""
    try:
        loaded = load_campaign(Path(campaign_path))
        report = validate_campaign(loaded)
        if not report.is_empty:
            for violation in report.violations:
                click.echo(f"{campaign_path}:{violation}")
            sys.exit(EXIT_CONFIG)
        runner = CampaignRunner(loaded, Path(out_dir) if out_dir else None, dt, parallelism)
        procedures = procedure_ids or [p.id for p in loaded.specification.procedure_spec]
        outcomes = [runner.run(procedure_id) for procedure_id in procedures]
    except ValidationError as e:
        for line in _pydantic_lines(e):
            click.echo(f"{campaign_path}:{line}")
        sys.exit(EXIT_CONFIG)
    except ScenarioTestError as e:
        click.echo(f"[ERROR] {e}", err=True)
        sys.exit(EXIT_CONFIG)

    for outcome in outcomes:
        _emit(outcome.report, output_format)
    sys.exit(max((outcome.exit_code for outcome in outcomes), default=EXIT_OK))


@cli.command()
@click.argument("trace_paths", nargs=-1, required=True, type=click.Path(dir_okay=False))
@click.option("--spec", "spec_path", required=True, type=click.Path(dir_okay=False), help="Test specification file")
@click.option("--procedure", "procedure_id", default=None, help="Procedure id")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=settings.default_output_dir,
              show_default=True)
@click.option("--format", "output_format", type=click.Choice(["machine", "text"]), default="text",
              show_default=True)
def evaluate(trace_paths, spec_path, procedure_id, out_dir, output_format) -> None:
    """Evaluate recorded traces after execution."""
    try:
        spec = load_specification(spec_path)
        metrics = metric_catalog(spec.metrics)
        traces, hashes = {}, {}
        for path in trace_paths:
            trace = read_trace(path)
            traces[trace.case_id] = trace
            hashes[trace.case_id] = bytes_hash(Path(path).read_bytes())

        if procedure_id is not None:
            procedure = spec.procedure(procedure_id)
        else:
            procedure = next((p for p in spec.procedure_spec if set(p.cases) <= set(traces)), None)
        if procedure is None:
            raise ScenarioTestError(f"No test procedure matches the given traces ({procedure_id or 'any'})")

        evaluations, cases = {}, {}
        for case_id in procedure.cases:
            case = spec.case(case_id)
            if case is None or case_id not in traces:
                continue
            cases[case_id] = case
            evaluations[case_id] = evaluate_case(case, traces[case_id], metrics)
        report = evaluate_procedure(procedure, evaluations, traces, hashes, cases=cases, metrics=metrics)
    except ValidationError as e:
        for line in _pydantic_lines(e):
            click.echo(f"{spec_path}:{line}", err=True)
        sys.exit(EXIT_CONFIG)
    except ScenarioTestError as e:
        click.echo(f"[ERROR] {e}", err=True)
        sys.exit(EXIT_CONFIG)

    report_dir = Path(out_dir) / "reports"
    report_dir.mkdir(parents=True, exist_ok=True)
    (report_dir / f"{procedure.id}.json").write_text(report_to_json(report), encoding="utf-8")
    (report_dir / f"{procedure.id}.txt").write_text(render_text(report), encoding="utf-8")
    _emit(report, output_format)
    sys.exit(VERDICT_EXIT_CODES[report.overall_verdict])


@cli.command()
@click.argument("report_path", type=click.Path(dir_okay=False))
@click.option("--format", "output_format", type=click.Choice(["machine", "text"]), default="text",
              show_default=True)
def report(report_path, output_format) -> None:
    """Render a machine-readable report."""
    try:
        loaded = read_report(report_path)
    except ScenarioTestError as e:
        click.echo(f"[ERROR] {e}", err=True)
        sys.exit(EXIT_CONFIG)
    _emit(loaded, output_format)
    sys.exit(EXIT_OK)


@cli.command()
@click.argument("drive_path", type=click.Path(dir_okay=False))
@click.argument("logical_paths", nargs=-1, required=True, type=click.Path(dir_okay=False))
def assign(drive_path, logical_paths) -> None:
    """Assign recorded scenarios of a test drive to logical scenarios."""
    try:
        drive = load_drive(drive_path)
        catalog = [load_logical(path) for path in logical_paths]
    except ValidationError as e:
        for line in _pydantic_lines(e):
            click.echo(f"{drive_path}:{line}", err=True)
        sys.exit(EXIT_CONFIG)
    except ScenarioTestError as e:
        click.echo(f"[ERROR] {e}", err=True)
        sys.exit(EXIT_CONFIG)
    for scenario_id, members in assign_drive(drive, catalog).items():
        click.echo(f"{scenario_id}: {', '.join(members) if members else '-'}")
    sys.exit(EXIT_OK)


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
