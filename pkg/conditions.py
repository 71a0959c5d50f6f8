"""
Язык условий периода применения критерия.

Грамматика:
    flag(NAME)
    SIGNAL OP VALUE [~ TOL]      OP: < <= == >= > (а также ≤ ≥), VALUE: число или сигнал
    A && B, A || B               && связывает сильнее ||
    once(EXPR)                   истинно после первого выполнения
    ( EXPR )
"""
import math
import re
from typing import Annotated, Any, Dict, List, Literal, Mapping, Optional, Set, Tuple, Union

from lark import Lark, Token, Transformer
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, UnexpectedToken, VisitError
from pydantic import Field, ValidationError, field_validator

from config import settings
from exceptions import ConditionSyntaxError, UnknownSignal
from schemas import SIGNAL_CATALOG, FrozenModel, SignalSpec

KEYWORDS = {"flag", "once"}
NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

GRAMMAR = r"""
?start: disjunction

?disjunction: disjunction _OR conjunction   -> or_
            | conjunction

?conjunction: conjunction _AND atom         -> and_
            | atom

?atom: _FLAG _LPAR NAME _RPAR               -> flag
     | _ONCE _LPAR disjunction _RPAR        -> once
     | NAME OP operand                      -> compare
     | NAME OP operand _TILDE UNSIGNED      -> compare
     | _LPAR disjunction _RPAR

?operand: NUMBER
        | NAME                              -> signal_ref

_AND: "&&"
_OR: "||"
_LPAR: "("
_RPAR: ")"
_TILDE: "~"
_FLAG: "flag"
_ONCE: "once"
OP: /<=|>=|==|<|>|≤|≥/
NAME: /[A-Za-z_][A-Za-z0-9_]*/
NUMBER: /[-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?/
UNSIGNED: /(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?/

%import common.WS
%ignore WS
"""

# Читаемые имена терминалов для сообщений об ошибках
TERMINAL_NAMES = {
    "_AND": "'&&'",
    "_OR": "'||'",
    "_LPAR": "'('",
    "_RPAR": "')'",
    "_TILDE": "'~'",
    "_FLAG": "'flag'",
    "_ONCE": "'once'",
    "OP": "comparison operator",
    "NAME": "signal name",
    "NUMBER": "number",
    "UNSIGNED": "non-negative number",
    "$END": "end of input",
}

Operator = Literal["<", "<=", "==", ">=", ">"]


def _check_name(value: str) -> str:
    if not NAME_RE.match(value) or value in KEYWORDS:
        raise ValueError(f"Invalid signal name {value!r}")
    return value


# AST schemas
class SignalRef(FrozenModel):
    signal: str

    @field_validator("signal")
    @classmethod
    def valid_name(cls, value: str) -> str:
        return _check_name(value)


class Flag(FrozenModel):
    type: Literal["flag"] = "flag"
    name: str

    @field_validator("name")
    @classmethod
    def valid_name(cls, value: str) -> str:
        return _check_name(value)


class Compare(FrozenModel):
    type: Literal["compare"] = "compare"
    signal: str
    op: Operator
    value: Union[SignalRef, float]
    tolerance: Optional[float] = Field(default=None, ge=0)

    @field_validator("signal")
    @classmethod
    def valid_name(cls, value: str) -> str:
        return _check_name(value)

    @field_validator("value")
    @classmethod
    def finite_value(cls, value: Any) -> Any:
        if isinstance(value, float) and not math.isfinite(value):
            raise ValueError("Comparison value must be finite")
        return value

    @field_validator("tolerance")
    @classmethod
    def finite_tolerance(cls, value: Optional[float]) -> Optional[float]:
        if value is None:
            return None
        if not math.isfinite(value):
            raise ValueError("Tolerance must be finite")
        return value + 0.0


class And(FrozenModel):
    type: Literal["and"] = "and"
    left: "Condition"
    right: "Condition"


class Or(FrozenModel):
    type: Literal["or"] = "or"
    left: "Condition"
    right: "Condition"


class Once(FrozenModel):
    type: Literal["once"] = "once"
    child: "Condition"


Condition = Annotated[Union[Flag, Compare, And, Or, Once], Field(discriminator="type")]

for _model in (And, Or, Once):
    _model.model_rebuild()


class _ConditionBuilder(Transformer):
    """Строит AST прямо во время LALR-разбора"""

    def flag(self, children):
        (name,) = children
        return Flag(name=str(name))

    def once(self, children):
        (child,) = children
        return Once(child=child)

    def and_(self, children):
        left, right = children
        return And(left=left, right=right)

    def or_(self, children):
        left, right = children
        return Or(left=left, right=right)

    def signal_ref(self, children):
        (name,) = children
        return SignalRef(signal=str(name))

    def compare(self, children):
        name, op, operand = children[:3]
        op = {"≤": "<=", "≥": ">="}.get(str(op), str(op))
        value = float(operand) if isinstance(operand, Token) else operand
        tolerance = float(children[3]) if len(children) > 3 else None
        if isinstance(value, float) and not math.isfinite(value):
            raise ConditionSyntaxError("number out of range", operand.start_pos, ())
        if tolerance is not None and not math.isfinite(tolerance):
            raise ConditionSyntaxError("tolerance out of range", children[3].start_pos, ())
        return Compare(signal=str(name), op=op, value=value, tolerance=tolerance)


_parser = Lark(GRAMMAR, parser="lalr", transformer=_ConditionBuilder())


def _expected(names) -> List[str]:
    return sorted(TERMINAL_NAMES.get(name, name) for name in names)


def condition_depth(node: Condition) -> int:
    """Глубина дерева условия (лист имеет глубину 1)"""
    deepest = 0
    stack = [(node, 1)]
    while stack:
        current, depth = stack.pop()
        deepest = max(deepest, depth)
        if isinstance(current, Once):
            stack.append((current.child, depth + 1))
        elif isinstance(current, (And, Or)):
            stack.append((current.left, depth + 1))
            stack.append((current.right, depth + 1))
    return deepest


def check_depth(node: Condition) -> Condition:
    limit = settings.condition_max_depth
    if condition_depth(node) > limit:
        raise ConditionSyntaxError(f"expression nests deeper than {limit} levels", 0, ())
    return node


def parse_condition(text: str) -> Condition:
    """Разбирает выражение условия; при ошибке ConditionSyntaxError с позицией"""
    try:
        return check_depth(_parser.parse(text))
    except ConditionSyntaxError:
        raise
    except UnexpectedToken as e:
        at_end = e.token.type == "$END"
        position = len(text) if at_end else e.token.start_pos
        what = "unexpected end of input" if at_end else f"unexpected token {str(e.token)!r}"
        raise ConditionSyntaxError(what, position, _expected(e.expected)) from None
    except UnexpectedCharacters as e:
        raise ConditionSyntaxError(
            f"unexpected character {text[e.pos_in_stream]!r}", e.pos_in_stream, _expected(e.allowed or ())
        ) from None
    except UnexpectedEOF as e:
        raise ConditionSyntaxError("unexpected end of input", len(text), _expected(e.expected)) from None
    except UnexpectedInput as e:
        raise ConditionSyntaxError("invalid expression", e.pos_in_stream or len(text), ()) from None
    except VisitError as e:
        if isinstance(e.orig_exc, ConditionSyntaxError):
            raise e.orig_exc from None
        raise ConditionSyntaxError(str(e.orig_exc), 0, ()) from None
    except ValidationError as e:
        raise ConditionSyntaxError(e.errors()[0]["msg"], 0, ()) from None
    except RecursionError:
        raise ConditionSyntaxError("expression is nested too deeply", 0, ()) from None


# Serialization
def _wrap(node, kinds) -> str:
    text = serialize_condition(node)
    return f"({text})" if isinstance(node, kinds) else text


def serialize_condition(node: Condition) -> str:
    """Печатает AST так, что parse_condition восстанавливает то же дерево"""
    if isinstance(node, Flag):
        return f"flag({node.name})"
    if isinstance(node, Compare):
        value = node.value.signal if isinstance(node.value, SignalRef) else repr(float(node.value))
        text = f"{node.signal} {node.op} {value}"
        if node.tolerance is not None:
            text += f" ~ {node.tolerance!r}"
        return text
    if isinstance(node, Once):
        return f"once({serialize_condition(node.child)})"
    if isinstance(node, And):
        return f"{_wrap(node.left, Or)} && {_wrap(node.right, (And, Or))}"
    return f"{serialize_condition(node.left)} || {_wrap(node.right, Or)}"


# Static checks
def referenced_signals(node: Condition) -> Set[str]:
    if isinstance(node, Flag):
        return {node.name}
    if isinstance(node, Compare):
        signals = {node.signal}
        if isinstance(node.value, SignalRef):
            signals.add(node.value.signal)
        return signals
    if isinstance(node, Once):
        return referenced_signals(node.child)
    return referenced_signals(node.left) | referenced_signals(node.right)


def check_condition(node: Condition, catalog: Mapping[str, SignalSpec] = SIGNAL_CATALOG) -> List[str]:
    """Проблемы условия относительно каталога сигналов"""
    problems: List[str] = []
    if isinstance(node, Flag):
        spec = catalog.get(node.name)
        if spec is None:
            problems.append(f"unknown signal {node.name!r}")
        elif spec.kind != "flag":
            problems.append(f"flag({node.name}) needs a flag signal")
    elif isinstance(node, Compare):
        for name in [node.signal] + ([node.value.signal] if isinstance(node.value, SignalRef) else []):
            spec = catalog.get(name)
            if spec is None:
                problems.append(f"unknown signal {name!r}")
            elif spec.kind != "numeric":
                problems.append(f"{name} is a flag, use flag({name})")
        if node.op == "==" and node.tolerance is None and settings.reach_tolerance == 0:
            problems.append(f"exact equality on {node.signal} needs an explicit tolerance ('~ TOL')")
    elif isinstance(node, Once):
        problems.extend(check_condition(node.child, catalog))
    else:
        problems.extend(check_condition(node.left, catalog))
        problems.extend(check_condition(node.right, catalog))
    return problems


# Evaluation
def _number(value: Any) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


class ConditionState:
    """Пошаговое вычисление условия по отсчетам трассы.

    Хранит защелки once (по пути узла в дереве) и предыдущий отсчет
    для обнаружения пересечения в сравнениях '=='. Сравнение '==' без
    явного допуска использует reach_tolerance.
    """

    def __init__(self, condition: Condition, reach_tolerance: Optional[float] = None):
        self.condition = condition
        self.reach_tolerance = settings.reach_tolerance if reach_tolerance is None else reach_tolerance
        self._latched: Dict[Tuple[int, ...], bool] = {}
        self._previous: Optional[Mapping[str, Any]] = None

    def step(self, sample: Mapping[str, Any]) -> bool:
        result = self._evaluate(self.condition, sample, ())
        self._previous = sample
        return result

    def _signal(self, sample: Mapping[str, Any], name: str) -> Any:
        if name not in sample:
            raise UnknownSignal(name)
        return sample[name]

    def _difference(self, node: Compare, sample: Mapping[str, Any]) -> Optional[float]:
        x = _number(self._signal(sample, node.signal))
        if isinstance(node.value, SignalRef):
            c = _number(self._signal(sample, node.value.signal))
        else:
            c = node.value
        if x is None or c is None:
            return None
        return x - c

    def _compare(self, node: Compare, sample: Mapping[str, Any]) -> bool:
        diff = self._difference(node, sample)
        if diff is None:
            return False
        if node.tolerance is not None:
            tol = node.tolerance
        else:
            tol = self.reach_tolerance if node.op == "==" else 0.0
        if node.op == "<":
            return diff < tol
        if node.op == "<=":
            return diff <= tol
        if node.op == ">":
            return diff > -tol
        if node.op == ">=":
            return diff >= -tol
        if abs(diff) <= tol:
            return True
        if self._previous is None:
            return False
        before = self._difference(node, self._previous)
        # пересечение между соседними отсчетами
        return before is not None and before * diff <= 0

    def _evaluate(self, node: Condition, sample: Mapping[str, Any], path: Tuple[int, ...]) -> bool:
        if isinstance(node, Flag):
            value = self._signal(sample, node.name)
            return bool(value) and _number(value) is not None
        if isinstance(node, Compare):
            return self._compare(node, sample)
        if isinstance(node, Once):
            fired = self._evaluate(node.child, sample, path + (0,))
            if fired:
                self._latched[path] = True
            return self._latched.get(path, False)
        left = self._evaluate(node.left, sample, path + (0,))
        right = self._evaluate(node.right, sample, path + (1,))
        if isinstance(node, And):
            return left and right
        return left or right
