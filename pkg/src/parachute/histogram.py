"""Equi-depth histograms that define ``bin(value)`` for parachute columns.

Two flavours share one type:

* numeric: ``B - 1`` sorted upper-inclusive boundaries, the last bin is
  open-ended. Out-of-range values clamp to the first or last bin.
* lowcard: an explicit value to bin map over frequency-sorted values, with an
  overflow bin (the heaviest) for values unseen at build time.

When the source column is nullable, bin 0 is reserved for NULL and value bins
are shifted to ``1..B``.
"""

import bisect
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DanglingForeignKeyError, DescriptorError, NullValueError, SchemaLookupError
from .storage import Database, key_index, sample_rows

logger = logging.getLogger(__name__)

NULL_BIN = 0


class HistogramKind(Enum):
    NUMERIC = "numeric"
    LOWCARD = "lowcard"

    @classmethod
    def from_string(cls, value: str) -> 'HistogramKind':
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"Invalid histogram kind: {value}. Must be either 'numeric' or 'lowcard'")


@dataclass
class WeightedSample:
    """Distinct source values with their join frequencies."""

    values: List[Any]
    frequencies: List[int]
    contains_null: bool = False

    def __post_init__(self):
        if len(self.values) != len(self.frequencies):
            raise ValueError("values and frequencies differ in length")
        if len(set(self.values)) != len(self.values):
            raise ValueError("sample values must be distinct")
        if any(f < 1 for f in self.frequencies):
            raise ValueError("sample frequencies must be >= 1")

    @classmethod
    def from_counts(cls, counts: Dict[Any, int], contains_null: bool = False) -> 'WeightedSample':
        values = sorted(counts)
        return cls(values, [int(counts[v]) for v in values], contains_null)

    @property
    def total_weight(self) -> int:
        return int(sum(self.frequencies))

    def pairs(self) -> List[Tuple[Any, int]]:
        return list(zip(self.values, self.frequencies))

    def __len__(self) -> int:
        return len(self.values)


def _greedy_groups(prefix: np.ndarray, cap: int) -> List[int]:
    """Exclusive end offsets of the greedy left-to-right packing under ``cap``."""
    n = len(prefix) - 1
    ends = []
    start = 0
    while start < n:
        end = int(np.searchsorted(prefix, prefix[start] + cap, side="right")) - 1
        end = max(end, start + 1)
        ends.append(end)
        start = end
    return ends


def min_max_partition(weights: Sequence[int], max_groups: int) -> List[int]:
    """Split ``weights`` into at most ``max_groups`` contiguous groups.

    The largest group weight is minimal over all contiguous partitions. Binary
    search over the answer with a greedy feasibility test, O(n log W) plus the
    refinement pass.

    Among partitions with that maximum, the one with more groups wins: spare
    groups split the heaviest multi-value group at its balanced point until the
    budget is spent or every group holds a single value.

    Returns:
        Exclusive end offsets of each group, the last one equal to ``len(weights)``.
    """
    if max_groups < 1:
        raise ValueError(f"need at least one group, got {max_groups}")
    n = len(weights)
    if n == 0:
        return []
    prefix = np.concatenate([[0], np.cumsum(np.asarray(weights, dtype=np.int64))])
    lo, hi = int(max(weights)), int(prefix[-1])
    while lo < hi:
        mid = (lo + hi) // 2
        if len(_greedy_groups(prefix, mid)) <= max_groups:
            hi = mid
        else:
            lo = mid + 1
    ends = _greedy_groups(prefix, lo)
    return _spend_spare_groups(prefix, ends, max_groups)


def _spend_spare_groups(prefix: np.ndarray, ends: List[int], max_groups: int) -> List[int]:
    # split the heaviest multi-value group at its balanced point; the maximum never grows
    ends = list(ends)
    while len(ends) < max_groups:
        best = None
        start = 0
        for i, end in enumerate(ends):
            if end - start > 1:
                weight = int(prefix[end] - prefix[start])
                if best is None or weight > best[0]:
                    best = (weight, i, start, end)
            start = end
        if best is None:
            break
        _, i, start, end = best
        cuts = np.arange(start + 1, end)
        left = prefix[cuts] - prefix[start]
        right = prefix[end] - prefix[cuts]
        cut = int(cuts[int(np.argmin(np.maximum(left, right)))])
        ends.insert(i, cut)
    return ends


@dataclass
class EquiDepthHistogram:
    """Maps source values to parachute bins."""

    kind: HistogramKind
    pbw: int
    bins: int
    boundaries: List[Any] = field(default_factory=list)
    value_bins: Dict[Any, int] = field(default_factory=dict)
    overflow_bin: Optional[int] = None
    nullable: bool = False
    bin_weights: List[int] = field(default_factory=list)
    observed_distinct: int = 0

    def __post_init__(self):
        if self.bins < 1:
            raise DescriptorError("a histogram needs at least one value bin")
        if self.bins + self.offset > (1 << self.pbw):
            raise DescriptorError(
                f"{self.bins} value bins plus NULL bin exceed 2^{self.pbw} codes"
            )
        if self.kind is HistogramKind.NUMERIC:
            if len(self.boundaries) != self.bins - 1:
                raise DescriptorError(f"{self.bins} bins need {self.bins - 1} boundaries, got {len(self.boundaries)}")
            if any(a >= b for a, b in zip(self.boundaries, self.boundaries[1:])):
                raise DescriptorError("histogram boundaries must be strictly increasing")
            self._bounds = np.asarray(self.boundaries, dtype=np.int64)
        else:
            if self.overflow_bin is None:
                self.overflow_bin = self.offset
            codes = set(self.value_bins.values()) | {self.overflow_bin}
            if not all(self.offset <= c < self.offset + self.bins for c in codes):
                raise DescriptorError("lowcard bin codes fall outside the value bins")

    @property
    def offset(self) -> int:
        return 1 if self.nullable else 0

    @property
    def null_bin(self) -> Optional[int]:
        return NULL_BIN if self.nullable else None

    @property
    def first_value_bin(self) -> int:
        return self.offset

    @property
    def last_value_bin(self) -> int:
        return self.offset + self.bins - 1

    @property
    def distinct_values(self) -> List[Any]:
        """Values retained for lowcard LIKE enumeration."""
        return sorted(self.value_bins)

    @property
    def per_value_bins(self) -> bool:
        """True when every observed numeric value owns its own bin."""
        if self.kind is HistogramKind.NUMERIC:
            return bool(self.bin_weights) and len(self.bin_weights) == self.bins and self.observed_distinct == self.bins
        return len(self.value_bins) <= self.bins and len(set(self.value_bins.values())) == len(self.value_bins)

    @classmethod
    def from_boundaries(cls, boundaries: Sequence[int], pbw: int, nullable: bool = False) -> 'EquiDepthHistogram':
        """Numeric histogram with explicit upper-inclusive boundaries.

        ``boundaries`` lists all bounds except the open-ended last bin.
        """
        return cls(HistogramKind.NUMERIC, pbw, len(boundaries) + 1, boundaries=list(boundaries), nullable=nullable)

    def bin(self, value: Any) -> int:
        if value is None:
            if not self.nullable:
                raise NullValueError("NULL value on a histogram without NULL bin")
            return NULL_BIN
        if self.kind is HistogramKind.NUMERIC:
            return bisect.bisect_left(self.boundaries, value) + self.offset
        return self.value_bins.get(value, self.overflow_bin)

    def bin_many(self, values: np.ndarray, nulls: Optional[np.ndarray] = None) -> np.ndarray:
        """Vectorized ``bin`` over a column; returns uint64 codes."""
        if nulls is None:
            nulls = np.zeros(len(values), dtype=bool)
        if nulls.any() and not self.nullable:
            raise NullValueError("NULL value on a histogram without NULL bin")
        if self.kind is HistogramKind.NUMERIC:
            codes = np.searchsorted(self._bounds, np.asarray(values, dtype=np.int64), side="left") + self.offset
        else:
            lookup = self.value_bins
            codes = np.fromiter(
                (lookup.get(v, self.overflow_bin) for v in values), dtype=np.int64, count=len(values)
            )
        codes = codes.astype(np.uint64)
        codes[nulls] = NULL_BIN
        return codes

    def bins_of_values(self, values: Iterable[Any]) -> List[int]:
        return sorted({self.bin(v) for v in values})

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "kind": self.kind.value,
            "pbw": self.pbw,
            "bins": self.bins,
            "nullable": self.nullable,
            "null_bin": self.null_bin,
            "bin_weights": list(self.bin_weights),
            "observed_distinct": self.observed_distinct,
        }
        if self.kind is HistogramKind.NUMERIC:
            data["boundaries"] = [int(b) for b in self.boundaries]
        else:
            data["value_bins"] = [[v, b] for v, b in sorted(self.value_bins.items())]
            data["overflow_bin"] = self.overflow_bin
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'EquiDepthHistogram':
        kind = HistogramKind.from_string(data["kind"])
        return cls(
            kind=kind,
            pbw=data["pbw"],
            bins=data["bins"],
            boundaries=list(data.get("boundaries", [])),
            value_bins={v: b for v, b in data.get("value_bins", [])},
            overflow_bin=data.get("overflow_bin"),
            nullable=data["nullable"],
            bin_weights=list(data.get("bin_weights", [])),
            observed_distinct=data.get("observed_distinct", 0),
        )


def value_bin_budget(pbw: int, nullable: bool, reserved_slots: int = 0) -> int:
    budget = (1 << pbw) - (1 if nullable else 0) - reserved_slots
    if budget < 1:
        raise DescriptorError(
            f"pbw={pbw} leaves no value bins (NULL bin: {nullable}, reserved codes: {reserved_slots})"
        )
    return budget


def build_equidepth(sample: WeightedSample, pbw: int, kind: HistogramKind = HistogramKind.NUMERIC,
                    reserved_slots: int = 0) -> EquiDepthHistogram:
    """Build the histogram minimizing the maximum bin weight.

    Args:
        sample: Distinct values and frequencies, plus whether NULL occurred
        pbw: Bits per stored code, at most ``2^pbw`` codes in total
        kind: numeric boundaries or a lowcard value map
        reserved_slots: Top codes kept free (the relaxed-mode marker)

    Raises:
        DescriptorError: If no value bin remains after reservations
    """
    if pbw < 1:
        raise DescriptorError(f"pbw must be >= 1, got {pbw}")
    nullable = sample.contains_null
    budget = value_bin_budget(pbw, nullable, reserved_slots)
    offset = 1 if nullable else 0

    if kind is HistogramKind.NUMERIC:
        order = sorted(range(len(sample)), key=lambda i: sample.values[i])
    else:
        order = sorted(range(len(sample)), key=lambda i: (-sample.frequencies[i], sample.values[i]))
    values = [sample.values[i] for i in order]
    weights = [sample.frequencies[i] for i in order]

    if not values:
        hist = EquiDepthHistogram(kind, pbw, 1, nullable=nullable, bin_weights=[0])
        logger.debug("histogram over an all-NULL sample: 1 value bin")
        return hist

    ends = min_max_partition(weights, min(budget, len(values)))
    bin_weights = []
    start = 0
    for end in ends:
        bin_weights.append(int(sum(weights[start:end])))
        start = end

    if kind is HistogramKind.NUMERIC:
        boundaries = [values[end - 1] for end in ends[:-1]]
        hist = EquiDepthHistogram(kind, pbw, len(ends), boundaries=boundaries, nullable=nullable,
                                  bin_weights=bin_weights)
    else:
        value_bins = {}
        start = 0
        for b, end in enumerate(ends):
            for v in values[start:end]:
                value_bins[v] = b + offset
            start = end
        heaviest = int(np.argmax(bin_weights)) + offset
        hist = EquiDepthHistogram(kind, pbw, len(ends), value_bins=value_bins, overflow_bin=heaviest,
                                  nullable=nullable, bin_weights=bin_weights)
    hist.observed_distinct = len(values)
    logger.debug("built %s histogram: %d value bins, max weight %d", kind.value, hist.bins, max(bin_weights))
    return hist


def estimate_distribution(database: Database, fk_table: str, pk_table: str, source_column: str,
                          m: int, seed: int, fk_column: Optional[str] = None,
                          relaxed: bool = False) -> WeightedSample:
    """Sample ``m`` FK rows, join them to the PK table and count source values.

    FK rows with a NULL key do not join and are ignored.

    Raises:
        SchemaLookupError: If there is no FK edge from ``fk_table`` to ``pk_table``
        DanglingForeignKeyError: A sampled key has no PK partner (strict mode)
    """
    if m < 1:
        raise ValueError(f"sample size must be >= 1, got {m}")
    schema = database.schema
    edge = _edge(schema, fk_table, pk_table, fk_column)
    fk_data = database.table(fk_table)
    pk_data = database.table(pk_table)
    index = key_index(pk_data, edge.pk_column, relaxed=relaxed)
    source = pk_data.column(source_column)
    keys = fk_data.column(edge.fk_column)

    counts: Counter = Counter()
    contains_null = False
    for row in sample_rows(fk_data, m, seed):
        if keys.nulls[row]:
            continue
        key = keys.get(row)
        match = index.get(key)
        if match is None:
            if relaxed:
                continue
            raise DanglingForeignKeyError(fk_table, row, key, pk_table)
        for pk_row in (match if relaxed else (match,)):
            value = source.get(pk_row)
            if value is None:
                contains_null = True
            else:
                counts[value] += 1
    if source.has_nulls:
        contains_null = True
    return WeightedSample.from_counts(counts, contains_null)


def _edge(schema, fk_table, pk_table, fk_column):
    edges = schema.fk_edges(fk_table, pk_table)
    if fk_column is not None:
        edges = [e for e in edges if e.fk_column == fk_column]
    if not edges:
        raise SchemaLookupError(f"no foreign key from {fk_table} to {pk_table}")
    return edges[0]
