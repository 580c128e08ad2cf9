"""Base-table predicates with exact evaluation.

NULL never satisfies a predicate except ``IsNull``. LIKE patterns use ``%``
and ``_`` as wildcards and have no escape character.
"""

import operator
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from .schema import LogicalType
from .storage import ColumnVector


class CompareOp(Enum):
    EQ = "="
    LT = "<"
    LE = "<="
    GT = ">"
    GE = ">="
    NE = "!="

    @classmethod
    def from_string(cls, value: str) -> 'CompareOp':
        aliases = {"==": "=", "<>": "!=", "≤": "<=", "≥": ">=", "≠": "!="}
        try:
            return cls(aliases.get(value, value))
        except ValueError:
            raise ValueError(f"Invalid comparison operator: {value}. Must be one of =, <, <=, >, >=, !=")

    @property
    def function(self) -> Callable[[Any, Any], bool]:
        return _OPERATORS[self]


_OPERATORS = {
    CompareOp.EQ: operator.eq,
    CompareOp.LT: operator.lt,
    CompareOp.LE: operator.le,
    CompareOp.GT: operator.gt,
    CompareOp.GE: operator.ge,
    CompareOp.NE: operator.ne,
}


@lru_cache(maxsize=1024)
def like_regex(pattern: str) -> "re.Pattern":
    """Compile a LIKE pattern into an anchored regular expression."""
    parts = []
    for c in pattern:
        if c == "%":
            parts.append(".*")
        elif c == "_":
            parts.append(".")
        else:
            parts.append(re.escape(c))
    return re.compile("".join(parts), re.DOTALL)


def like(value: str, pattern: str) -> bool:
    return like_regex(pattern).fullmatch(value) is not None


def ilike(value: str, pattern: str) -> bool:
    return like_regex(pattern.lower()).fullmatch(value.lower()) is not None


@dataclass(frozen=True)
class BasePredicate(ABC):
    """A predicate over one column of one relation."""

    column: str

    type_name = "abstract"

    @abstractmethod
    def evaluate(self, value: Any) -> bool:
        """Exact evaluation on a single (possibly NULL) value."""
        pass

    def mask(self, column: ColumnVector) -> np.ndarray:
        """Exact evaluation over a whole column."""
        return np.fromiter(
            (False if null else self.evaluate(v) for v, null in zip(column.values.tolist(), column.nulls)),
            dtype=bool,
            count=len(column),
        )

    def _fields(self) -> Dict[str, Any]:
        return {}

    def to_dict(self) -> Dict[str, Any]:
        data = {"type": self.type_name, "column": self.column}
        data.update(self._fields())
        return data

    def describe(self) -> str:
        return f"{self.column} {self.type_name}"


@dataclass(frozen=True)
class Compare(BasePredicate):
    op: CompareOp
    value: Any

    type_name = "compare"

    def evaluate(self, value: Any) -> bool:
        if value is None or self.value is None:
            return False
        try:
            return bool(self.op.function(value, self.value))
        except TypeError:
            return False

    def mask(self, column: ColumnVector) -> np.ndarray:
        if column.logical_type is LogicalType.INT64 and isinstance(self.value, int):
            return self.op.function(column.values, self.value) & ~column.nulls
        return super().mask(column)

    def _fields(self):
        return {"op": self.op.value, "value": self.value}

    def describe(self) -> str:
        return f"{self.column} {self.op.value} {self.value!r}"


@dataclass(frozen=True)
class Between(BasePredicate):
    low: Any
    high: Any

    type_name = "between"

    def evaluate(self, value: Any) -> bool:
        if value is None or self.low is None or self.high is None:
            return False
        try:
            return self.low <= value <= self.high
        except TypeError:
            return False

    def mask(self, column: ColumnVector) -> np.ndarray:
        if column.logical_type is LogicalType.INT64 and isinstance(self.low, int) and isinstance(self.high, int):
            return (column.values >= self.low) & (column.values <= self.high) & ~column.nulls
        return super().mask(column)

    def _fields(self):
        return {"low": self.low, "high": self.high}

    def describe(self) -> str:
        return f"{self.column} BETWEEN {self.low!r} AND {self.high!r}"


@dataclass(frozen=True)
class InList(BasePredicate):
    values: Tuple[Any, ...]

    type_name = "in"

    def evaluate(self, value: Any) -> bool:
        return value is not None and value in self._members

    @property
    def _members(self) -> frozenset:
        return frozenset(v for v in self.values if v is not None)

    def mask(self, column: ColumnVector) -> np.ndarray:
        if column.logical_type is LogicalType.INT64:
            members = np.array([v for v in self._members if isinstance(v, int)], dtype=np.int64)
            return np.isin(column.values, members) & ~column.nulls
        return super().mask(column)

    def _fields(self):
        return {"values": list(self.values)}

    def describe(self) -> str:
        return f"{self.column} IN {list(self.values)!r}"


@dataclass(frozen=True)
class IsNull(BasePredicate):
    type_name = "is_null"

    def evaluate(self, value: Any) -> bool:
        return value is None

    def mask(self, column: ColumnVector) -> np.ndarray:
        return column.nulls.copy()

    def describe(self) -> str:
        return f"{self.column} IS NULL"


@dataclass(frozen=True)
class Like(BasePredicate):
    pattern: str

    type_name = "like"

    def evaluate(self, value: Any) -> bool:
        return isinstance(value, str) and like(value, self.pattern)

    def _fields(self):
        return {"pattern": self.pattern}

    def describe(self) -> str:
        return f"{self.column} LIKE {self.pattern!r}"


@dataclass(frozen=True)
class ILike(BasePredicate):
    pattern: str

    type_name = "ilike"

    def evaluate(self, value: Any) -> bool:
        return isinstance(value, str) and ilike(value, self.pattern)

    def _fields(self):
        return {"pattern": self.pattern}

    def describe(self) -> str:
        return f"{self.column} ILIKE {self.pattern!r}"


@dataclass(frozen=True)
class EnumerableRegex(BasePredicate):
    """Full-match regular expression; integers match on their decimal text."""

    pattern: str

    type_name = "regex"

    def evaluate(self, value: Any) -> bool:
        if value is None:
            return False
        return re.fullmatch(self.pattern, str(value), re.DOTALL) is not None

    def _fields(self):
        return {"pattern": self.pattern}

    def describe(self) -> str:
        return f"{self.column} ~ {self.pattern!r}"


@dataclass(frozen=True)
class EnumeratedUDF(BasePredicate):
    """A user-defined predicate given by the set of values it accepts."""

    name: str
    values: Tuple[Any, ...]

    type_name = "udf"

    def evaluate(self, value: Any) -> bool:
        return value is not None and value in set(self.values)

    def mask(self, column: ColumnVector) -> np.ndarray:
        return InList(self.column, self.values).mask(column)

    def _fields(self):
        return {"name": self.name, "values": list(self.values)}

    def describe(self) -> str:
        return f"{self.name}({self.column})"


@dataclass(frozen=True)
class Or(BasePredicate):
    arms: Tuple[BasePredicate, ...]

    type_name = "or"

    def __post_init__(self):
        if not self.arms:
            raise ValueError("a disjunction needs at least one arm")
        for arm in self.arms:
            if arm.column != self.column:
                raise ValueError(f"disjunction arm on {arm.column} inside a disjunction on {self.column}")

    def evaluate(self, value: Any) -> bool:
        return any(arm.evaluate(value) for arm in self.arms)

    def mask(self, column: ColumnVector) -> np.ndarray:
        out = np.zeros(len(column), dtype=bool)
        for arm in self.arms:
            out |= arm.mask(column)
        return out

    def _fields(self):
        return {"arms": [arm.to_dict() for arm in self.arms]}

    def describe(self) -> str:
        return "(" + " OR ".join(arm.describe() for arm in self.arms) + ")"


_TYPES = {cls.type_name: cls for cls in (Compare, Between, InList, IsNull, Like, ILike, EnumerableRegex, EnumeratedUDF, Or)}


def predicate_from_dict(data: Dict[str, Any], column: Optional[str] = None) -> BasePredicate:
    """Build a predicate from its JSON form; ``column`` is inherited by disjunction arms."""
    kind = data["type"]
    column = data.get("column", column)
    if column is None:
        raise ValueError(f"{kind} predicate names no column")
    if kind == "compare":
        return Compare(column, CompareOp.from_string(data["op"]), data.get("value"))
    if kind == "between":
        return Between(column, data.get("low"), data.get("high"))
    if kind == "in":
        return InList(column, tuple(data.get("values", [])))
    if kind == "is_null":
        return IsNull(column)
    if kind == "like":
        return Like(column, data["pattern"])
    if kind == "ilike":
        return ILike(column, data["pattern"])
    if kind == "regex":
        return EnumerableRegex(column, data["pattern"])
    if kind == "udf":
        return EnumeratedUDF(column, data.get("name", "udf"), tuple(data.get("values", [])))
    if kind == "or":
        return Or(column, tuple(predicate_from_dict(arm, column) for arm in data["arms"]))
    raise ValueError(f"Invalid predicate type: {kind}. Must be one of {', '.join(_TYPES)}")


def conjunction_mask(predicates: List[BasePredicate], column_of: Callable[[str], ColumnVector], rows: int) -> np.ndarray:
    """AND of the exact masks of ``predicates``."""
    out = np.ones(rows, dtype=bool)
    for predicate in predicates:
        out &= predicate.mask(column_of(predicate.column))
    return out
