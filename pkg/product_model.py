"""
Модель изделия: декомпозиция системы на компоненты, аппаратные части
и программные модули, плюс трассировка функция -> изделие -> требование.
"""
from collections import Counter
from typing import Dict, Iterable, Iterator, Literal, Optional, Set, Tuple

from schemas import FrozenModel, ReportBuilder, ValidationReport

NodeKind = Literal[
    "system",
    "component",
    "hardware_component",
    "software_component",
    "hardware_part",
    "hardware_subpart",
    "hardware_elementary_subpart",
    "software_unit",
]

# Допустимые виды дочерних узлов для каждого вида узла
ALLOWED_CHILDREN: Dict[str, Set[str]] = {
    "system": {"system", "component"},
    "component": {"component", "hardware_component", "software_component", "hardware_part", "software_unit"},
    "hardware_component": {"hardware_component", "hardware_part"},
    "software_component": {"software_component", "software_unit"},
    "hardware_part": {"hardware_subpart"},
    "hardware_subpart": {"hardware_subpart", "hardware_elementary_subpart"},
    "hardware_elementary_subpart": set(),
    "software_unit": set(),
}

SUBCOMPONENT_KINDS = {"component", "hardware_component", "software_component"}
IMPLEMENTATION_KINDS = {"hardware_part", "software_unit"}


class DecompositionNode(FrozenModel):
    id: str
    kind: NodeKind
    name: str = ""
    # декомпозиция узла намеренно не детализирована
    elided: bool = False
    children: Tuple["DecompositionNode", ...] = ()

    def walk(self) -> Iterator["DecompositionNode"]:
        yield self
        for child in self.children:
            yield from child.walk()


class VehicleFunction(FrozenModel):
    id: str
    description: str
    implemented_by: Tuple[str, ...]


class Item(FrozenModel):
    id: str
    definition: str
    systems: Tuple[DecompositionNode, ...]


class ItemDefinition(FrozenModel):
    id: str
    functionality: str
    functional_scenarios: Tuple[str, ...] = ()
    derived_requirements: Tuple[str, ...] = ()


class Requirement(FrozenModel):
    id: str
    statement: str
    verified_by: Tuple[str, ...] = ()


class ProductModel(FrozenModel):
    """Описание изделия фазы концепции: функции, элементы, определения, требования"""

    functions: Tuple[VehicleFunction, ...] = ()
    items: Tuple[Item, ...] = ()
    definitions: Tuple[ItemDefinition, ...] = ()
    requirements: Tuple[Requirement, ...] = ()


def _walk_paths(node: DecompositionNode, path: str) -> Iterator[Tuple[str, DecompositionNode]]:
    yield path, node
    for i, child in enumerate(node.children):
        yield from _walk_paths(child, f"{path}.children[{i}]")


def validate_decomposition(root: DecompositionNode) -> ValidationReport:
    """Проверяет правила видов/детей и то, что декомпозиция является деревом"""
    builder = ReportBuilder()
    nodes = list(_walk_paths(root, root.id))

    seen: Dict[str, str] = {}
    for path, node in nodes:
        if node.id in seen:
            builder.add(path, f"tree structure: node {node.id!r} already appears at {seen[node.id]}")
        else:
            seen[node.id] = path

    for path, node in nodes:
        allowed = ALLOWED_CHILDREN[node.kind]
        for i, child in enumerate(node.children):
            if child.kind not in allowed:
                builder.add(f"{path}.children[{i}]", f"{node.kind} cannot contain {child.kind}")

        if node.kind == "system" and not node.children and not node.elided:
            builder.add(path, "system consists of one or more components or subsystems")

        if node.kind == "component" and not node.elided:
            kinds = {child.kind for child in node.children}
            # компонент нижнего уровня: одна или несколько аппаратных частей и/или программных модулей
            if not kinds & SUBCOMPONENT_KINDS and not kinds & IMPLEMENTATION_KINDS:
                builder.add(path, "leaf-level component needs one or more hardware parts and/or software units")

        if node.kind in ("hardware_component", "software_component") and not node.children and not node.elided:
            builder.add(path, f"{node.kind} needs at least one child")
    return builder.build()


def validate_product(
    functions: Iterable[VehicleFunction] = (),
    items: Iterable[Item] = (),
    definitions: Iterable[ItemDefinition] = (),
    requirements: Iterable[Requirement] = (),
    criterion_ids: Optional[Iterable[str]] = None,
    functional_scenario_ids: Optional[Iterable[str]] = None,
) -> ValidationReport:
    """Проверяет перекрестные ссылки фазы концепции"""
    builder = ReportBuilder()
    functions, items = list(functions), list(items)
    definitions, requirements = list(definitions), list(requirements)
    item_ids = {item.id for item in items}
    definition_ids = {d.id for d in definitions}
    requirement_ids = {r.id for r in requirements}

    for kind, ids in (
        ("function", [f.id for f in functions]),
        ("item", [i.id for i in items]),
        ("item definition", [d.id for d in definitions]),
        ("requirement", [r.id for r in requirements]),
    ):
        for identifier, count in Counter(ids).items():
            if count > 1:
                builder.add(identifier, f"duplicate {kind} id")

    for function in functions:
        if not function.implemented_by:
            builder.add(f"{function.id}.implemented_by", "function is implemented by one or more items")
        for ref in function.implemented_by:
            if ref not in item_ids:
                builder.add(f"{function.id}.implemented_by", f"unknown item {ref!r}")

    for item in items:
        if not item.systems:
            builder.add(f"{item.id}.systems", "item consists of one or more systems")
        if item.definition not in definition_ids:
            builder.add(f"{item.id}.definition", f"unknown item definition {item.definition!r}")
        for i, system in enumerate(item.systems):
            if system.kind != "system":
                builder.add(f"{item.id}.systems[{i}]", f"item root must be a system, got {system.kind}")
            builder.extend(validate_decomposition(system), f"{item.id}.systems[{i}]")

    scenario_ids = set(functional_scenario_ids) if functional_scenario_ids is not None else None
    for definition in definitions:
        if not definition.functionality.strip():
            builder.add(f"{definition.id}.functionality", "functionality is non-empty")
        for ref in definition.derived_requirements:
            if ref not in requirement_ids:
                builder.add(f"{definition.id}.derived_requirements", f"unknown requirement {ref!r}")
        if scenario_ids is not None:
            for ref in definition.functional_scenarios:
                if ref not in scenario_ids:
                    builder.add(f"{definition.id}.functional_scenarios", f"unknown functional scenario {ref!r}")

    known_criteria = set(criterion_ids) if criterion_ids is not None else None
    for requirement in requirements:
        if not requirement.statement.strip():
            builder.add(f"{requirement.id}.statement", "statement is non-empty")
        if known_criteria is not None:
            for ref in requirement.verified_by:
                if ref not in known_criteria:
                    builder.add(f"{requirement.id}.verified_by", f"unknown evaluation criterion {ref!r}")
    return builder.build()
