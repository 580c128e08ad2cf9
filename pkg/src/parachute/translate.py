"""Sound translation of base predicates onto parachute columns.

A translated predicate never rejects a stored code whose row joins a PK row
satisfying the base predicate. It may accept extra rows.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

import numpy as np

from .catalog import DescriptorKind, ParachuteDescriptor
from .errors import NotTranslatable, UnsupportedPattern
from .fingerprint import fingerprint, pattern_mask
from .histogram import EquiDepthHistogram
from .predicates import (
    BasePredicate,
    Between,
    Compare,
    CompareOp,
    EnumerableRegex,
    EnumeratedUDF,
    ILike,
    InList,
    IsNull,
    Like,
    Or,
)

logger = logging.getLogger(__name__)

REGEX_ENUMERATION_CAP = 1024


class TranslatedPredicate(ABC):
    """A predicate over a single stored parachute code."""

    type_name = "abstract"

    @abstractmethod
    def evaluate_many(self, codes: np.ndarray) -> np.ndarray:
        pass

    def evaluate(self, stored: int) -> bool:
        return bool(self.evaluate_many(np.array([stored], dtype=np.uint64))[0])

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        pass

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_dict()})"


@dataclass(frozen=True, repr=False)
class BinCompare(TranslatedPredicate):
    op: CompareOp
    code: int

    type_name = "bin_compare"

    def evaluate_many(self, codes: np.ndarray) -> np.ndarray:
        return self.op.function(codes, np.uint64(self.code))

    def to_dict(self):
        return {"type": self.type_name, "op": self.op.value, "code": self.code}


@dataclass(frozen=True, repr=False)
class BinBetween(TranslatedPredicate):
    low: int
    high: int

    type_name = "bin_between"

    def evaluate_many(self, codes: np.ndarray) -> np.ndarray:
        return (codes >= np.uint64(self.low)) & (codes <= np.uint64(self.high))

    def to_dict(self):
        return {"type": self.type_name, "low": self.low, "high": self.high}


@dataclass(frozen=True, repr=False)
class BinIn(TranslatedPredicate):
    codes: FrozenSet[int]

    type_name = "bin_in"

    def evaluate_many(self, codes: np.ndarray) -> np.ndarray:
        return np.isin(codes, np.array(sorted(self.codes), dtype=np.uint64))

    def to_dict(self):
        return {"type": self.type_name, "codes": sorted(self.codes)}


@dataclass(frozen=True, repr=False)
class MaskSubset(TranslatedPredicate):
    pmask: int

    type_name = "mask_subset"

    def evaluate_many(self, codes: np.ndarray) -> np.ndarray:
        pmask = np.uint64(self.pmask)
        return (codes & pmask) == pmask

    def to_dict(self):
        return {"type": self.type_name, "pmask": self.pmask}


@dataclass(frozen=True, repr=False)
class AlwaysTrue(TranslatedPredicate):
    type_name = "always_true"

    def evaluate_many(self, codes: np.ndarray) -> np.ndarray:
        return np.ones(len(codes), dtype=bool)

    def to_dict(self):
        return {"type": self.type_name}


@dataclass(frozen=True, repr=False)
class AlwaysFalse(TranslatedPredicate):
    type_name = "always_false"

    def evaluate_many(self, codes: np.ndarray) -> np.ndarray:
        return np.zeros(len(codes), dtype=bool)

    def to_dict(self):
        return {"type": self.type_name}


@dataclass(frozen=True, repr=False)
class AnyOf(TranslatedPredicate):
    """Disjunction of translated arms."""

    arms: Tuple[TranslatedPredicate, ...]

    type_name = "any_of"

    def evaluate_many(self, codes: np.ndarray) -> np.ndarray:
        out = np.zeros(len(codes), dtype=bool)
        for arm in self.arms:
            out |= arm.evaluate_many(codes)
        return out

    def to_dict(self):
        return {"type": self.type_name, "arms": [arm.to_dict() for arm in self.arms]}


def translated_from_dict(data: Dict[str, Any]) -> TranslatedPredicate:
    kind = data["type"]
    if kind == "bin_compare":
        return BinCompare(CompareOp.from_string(data["op"]), int(data["code"]))
    if kind == "bin_between":
        return BinBetween(int(data["low"]), int(data["high"]))
    if kind == "bin_in":
        return BinIn(frozenset(int(c) for c in data["codes"]))
    if kind == "mask_subset":
        return MaskSubset(int(data["pmask"]))
    if kind == "always_true":
        return AlwaysTrue()
    if kind == "always_false":
        return AlwaysFalse()
    if kind == "any_of":
        return AnyOf(tuple(translated_from_dict(arm) for arm in data["arms"]))
    raise ValueError(f"Invalid translated predicate type: {kind}")


def evaluate_translated(tp: TranslatedPredicate, stored: int) -> bool:
    return tp.evaluate(stored)


@dataclass(frozen=True)
class ParachutePredicate:
    """A translated predicate bound to a parachute column.

    ``marker`` is the relaxed-mode pass-through code; rows holding it always
    qualify.
    """

    column: str
    descriptor_id: int
    source: str
    translated: TranslatedPredicate
    marker: Optional[int] = None

    def evaluate_many(self, codes: np.ndarray) -> np.ndarray:
        out = self.translated.evaluate_many(codes)
        if self.marker is not None:
            out |= codes == np.uint64(self.marker)
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "column": self.column,
            "descriptor_id": self.descriptor_id,
            "source": self.source,
            "marker": self.marker,
            "translated": self.translated.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ParachutePredicate':
        return cls(
            column=data["column"],
            descriptor_id=data["descriptor_id"],
            source=data["source"],
            translated=translated_from_dict(data["translated"]),
            marker=data.get("marker"),
        )


# -- regex enumeration --------------------------------------------------------

_UNSUPPORTED = set("*+{}[].")
_ESCAPABLE = set("\\.^$*+?{}[]|()-/ ")


class _RegexEnumerator:
    """Recursive descent over literals, escapes, groups, ``|`` and ``?``."""

    def __init__(self, pattern: str, cap: int):
        self.pattern = pattern
        self.pos = 0
        self.cap = cap

    def fail(self, why: str):
        raise UnsupportedPattern(f"{why} at offset {self.pos} in {self.pattern!r}")

    def peek(self) -> Optional[str]:
        return self.pattern[self.pos] if self.pos < len(self.pattern) else None

    def bound(self, language: Set[str]) -> Set[str]:
        if len(language) > self.cap:
            self.fail(f"more than {self.cap} strings")
        return language

    def parse(self) -> Set[str]:
        language = self.alternation()
        if self.pos != len(self.pattern):
            self.fail("unbalanced ')'")
        return language

    def alternation(self) -> Set[str]:
        language = self.sequence()
        while self.peek() == "|":
            self.pos += 1
            language = self.bound(language | self.sequence())
        return language

    def sequence(self) -> Set[str]:
        language = {""}
        while self.peek() is not None and self.peek() not in "|)":
            atom = self.atom()
            if self.peek() == "?":
                self.pos += 1
                atom = atom | {""}
            language = self.bound({a + b for a in language for b in atom})
        return language

    def atom(self) -> Set[str]:
        c = self.peek()
        if c == "(":
            self.pos += 1
            if self.pattern.startswith("?:", self.pos):
                self.pos += 2
            elif self.peek() == "?":
                self.fail("unsupported group extension")
            language = self.alternation()
            if self.peek() != ")":
                self.fail("missing ')'")
            self.pos += 1
            return language
        if c == "\\":
            self.pos += 1
            escaped = self.peek()
            if escaped is None or escaped not in _ESCAPABLE:
                self.fail("unsupported escape")
            self.pos += 1
            return {escaped}
        if c in _UNSUPPORTED:
            self.fail(f"{c!r} denotes an unbounded or character-class language")
        if c in "?^$":
            self.fail(f"misplaced {c!r}")
        self.pos += 1
        return {c}


def enumerate_regex(pattern: str, cap: int = REGEX_ENUMERATION_CAP) -> Set[str]:
    """The finite language of a full-match regular expression.

    Supports literals, ``\\`` escapes of metacharacters, groups, ``|`` and ``?``.
    A leading ``^`` and a trailing unescaped ``$`` are ignored.

    Raises:
        UnsupportedPattern: for repetition, character classes, ``.`` or when
            more than ``cap`` strings would be produced
    """
    body = pattern
    if body.startswith("^"):
        body = body[1:]
    if body.endswith("$") and not _escaped_tail(body):
        body = body[:-1]
    return _RegexEnumerator(body, cap).parse()


def _escaped_tail(body: str) -> bool:
    slashes = len(body[:-1]) - len(body[:-1].rstrip("\\"))
    return slashes % 2 == 1


# -- translation --------------------------------------------------------------

def _typed(descriptor: ParachuteDescriptor, value: Any) -> bool:
    if descriptor.kind is DescriptorKind.NUMERIC_HISTOGRAM:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, str)


def _require_typed(pred: BasePredicate, descriptor: ParachuteDescriptor, values: Iterable[Any]) -> None:
    for value in values:
        if value is not None and not _typed(descriptor, value):
            raise NotTranslatable(
                f"{pred.describe()}: constant {value!r} does not fit {descriptor.kind.value}"
            )


def _bins(hist: EquiDepthHistogram, values: Iterable[Any]) -> FrozenSet[int]:
    return frozenset(hist.bin(v) for v in values if v is not None)


def _lowcard_enumerate(pred: BasePredicate, hist: EquiDepthHistogram) -> TranslatedPredicate:
    # unseen values land in the overflow bin, so it always qualifies
    codes = {hist.bin(v) for v in hist.distinct_values if pred.evaluate(v)}
    codes.add(hist.overflow_bin)
    return BinIn(frozenset(codes))


def _translate_numeric(pred: BasePredicate, descriptor: ParachuteDescriptor) -> TranslatedPredicate:
    hist = descriptor.histogram
    if isinstance(pred, Compare):
        _require_typed(pred, descriptor, [pred.value])
        if pred.value is None:
            return AlwaysFalse()
        code = hist.bin(pred.value)
        if pred.op in (CompareOp.LT, CompareOp.LE):
            if hist.nullable:
                return BinBetween(hist.first_value_bin, code)
            return BinCompare(CompareOp.LE, code)
        if pred.op in (CompareOp.GT, CompareOp.GE):
            return BinCompare(CompareOp.GE, code)
        if pred.op is CompareOp.EQ:
            return BinCompare(CompareOp.EQ, code)
        return AlwaysTrue()
    if isinstance(pred, Between):
        _require_typed(pred, descriptor, [pred.low, pred.high])
        if pred.low is None or pred.high is None or pred.low > pred.high:
            return AlwaysFalse()
        return BinBetween(hist.bin(pred.low), hist.bin(pred.high))
    if isinstance(pred, InList):
        _require_typed(pred, descriptor, pred.values)
        return BinIn(_bins(hist, pred.values))
    if isinstance(pred, EnumeratedUDF):
        _require_typed(pred, descriptor, pred.values)
        if not hist.per_value_bins:
            raise NotTranslatable(
                f"{pred.describe()}: {descriptor.column_name} does not give every value its own bin"
            )
        return BinIn(_bins(hist, pred.values))
    raise NotTranslatable(f"{pred.describe()} has no translation onto {descriptor.kind.value}")


def _translate_lowcard(pred: BasePredicate, descriptor: ParachuteDescriptor) -> TranslatedPredicate:
    hist = descriptor.histogram
    if isinstance(pred, Compare):
        _require_typed(pred, descriptor, [pred.value])
        if pred.value is None:
            return AlwaysFalse()
        code = hist.bin(pred.value)
        if pred.op is CompareOp.EQ:
            return BinCompare(CompareOp.EQ, code)
        if pred.op is CompareOp.NE:
            sharing = [v for v, b in hist.value_bins.items() if b == code]
            if code != hist.overflow_bin and sharing == [pred.value]:
                return BinCompare(CompareOp.NE, code)
            return AlwaysTrue()
        return _lowcard_enumerate(pred, hist)
    if isinstance(pred, Between):
        _require_typed(pred, descriptor, [pred.low, pred.high])
        return _lowcard_enumerate(pred, hist)
    if isinstance(pred, (InList, EnumeratedUDF)):
        _require_typed(pred, descriptor, pred.values)
        return BinIn(_bins(hist, pred.values))
    if isinstance(pred, (Like, ILike)):
        return _lowcard_enumerate(pred, hist)
    if isinstance(pred, EnumerableRegex):
        try:
            literals = enumerate_regex(pred.pattern)
        except UnsupportedPattern:
            return _lowcard_enumerate(pred, hist)
        return BinIn(_bins(hist, literals))
    raise NotTranslatable(f"{pred.describe()} has no translation onto {descriptor.kind.value}")


def _translate_fingerprint(pred: BasePredicate, descriptor: ParachuteDescriptor) -> TranslatedPredicate:
    partition = descriptor.partition

    def fp(value: str) -> int:
        return fingerprint(partition, value).mask

    if isinstance(pred, Like):
        return MaskSubset(pattern_mask(partition, pred.pattern).mask)
    if isinstance(pred, ILike):
        if not descriptor.ilike_sound:
            raise NotTranslatable(
                f"{pred.describe()}: the byte partition of {descriptor.column_name} splits ASCII case pairs"
            )
        return MaskSubset(pattern_mask(partition, pred.pattern, case_insensitive=True).mask)
    if isinstance(pred, Compare):
        _require_typed(pred, descriptor, [pred.value])
        if pred.value is None:
            return AlwaysFalse()
        if pred.op is CompareOp.EQ:
            return BinCompare(CompareOp.EQ, fp(pred.value))
        if pred.op is CompareOp.NE:
            return AlwaysTrue()
        raise NotTranslatable(f"{pred.describe()}: fingerprints do not preserve order")
    if isinstance(pred, (InList, EnumeratedUDF)):
        _require_typed(pred, descriptor, pred.values)
        return BinIn(frozenset(fp(v) for v in pred.values if v is not None))
    if isinstance(pred, EnumerableRegex):
        try:
            literals = enumerate_regex(pred.pattern)
        except UnsupportedPattern as e:
            raise NotTranslatable(f"{pred.describe()}: {e}")
        return BinIn(frozenset(fp(v) for v in literals))
    raise NotTranslatable(f"{pred.describe()} has no translation onto {descriptor.kind.value}")


def _value_codes(tp: TranslatedPredicate, hist: EquiDepthHistogram) -> Optional[Set[int]]:
    """Codes accepted by ``tp`` among the histogram's codes; None means all."""
    if isinstance(tp, AlwaysTrue):
        return None
    if isinstance(tp, AlwaysFalse):
        return set()
    if isinstance(tp, BinIn):
        return set(tp.codes)
    codes = np.arange(hist.offset + hist.bins, dtype=np.uint64)
    return {int(c) for c in codes[tp.evaluate_many(codes)]}


def _translate_or(pred: Or, descriptor: ParachuteDescriptor) -> TranslatedPredicate:
    arms = [translate(arm, descriptor) for arm in pred.arms]
    if any(isinstance(arm, AlwaysTrue) for arm in arms):
        return AlwaysTrue()
    arms = [arm for arm in arms if not isinstance(arm, AlwaysFalse)]
    if not arms:
        return AlwaysFalse()
    if descriptor.kind.uses_histogram:
        codes: Set[int] = set()
        for arm in arms:
            codes |= _value_codes(arm, descriptor.histogram)
        return BinIn(frozenset(codes))
    return arms[0] if len(arms) == 1 else AnyOf(tuple(arms))


def translate(pred: BasePredicate, descriptor: ParachuteDescriptor) -> TranslatedPredicate:
    """Translate ``pred`` on ``descriptor``'s source column.

    Raises:
        NotTranslatable: If the predicate variant does not fit the descriptor kind,
            a constant has the wrong type, or the ILIKE gate fails
    """
    if isinstance(pred, IsNull):
        hist_nullable = descriptor.kind.uses_histogram and descriptor.histogram.nullable
        if hist_nullable or (descriptor.kind is DescriptorKind.STRING_FINGERPRINT and descriptor.nullable_source):
            return BinCompare(CompareOp.EQ, 0)
        return AlwaysFalse()
    if isinstance(pred, Or):
        return _translate_or(pred, descriptor)
    if descriptor.kind is DescriptorKind.NUMERIC_HISTOGRAM:
        return _translate_numeric(pred, descriptor)
    if descriptor.kind is DescriptorKind.LOWCARD_STRING:
        return _translate_lowcard(pred, descriptor)
    return _translate_fingerprint(pred, descriptor)


def translate_conjunction(predicates: List[BasePredicate], descriptor: ParachuteDescriptor) -> List[TranslatedPredicate]:
    """Translate each conjunct; untranslatable conjuncts are left out.

    An ``AlwaysFalse`` conjunct absorbs the rest and ``AlwaysTrue`` conjuncts
    are dropped.
    """
    out: List[TranslatedPredicate] = []
    for pred in predicates:
        try:
            tp = translate(pred, descriptor)
        except NotTranslatable as e:
            logger.debug("conjunct skipped: %s", e)
            continue
        if isinstance(tp, AlwaysFalse):
            return [tp]
        if not isinstance(tp, AlwaysTrue):
            out.append(tp)
    return out
