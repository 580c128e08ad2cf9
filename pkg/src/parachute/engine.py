"""Pipelined hash-join execution with table filters, parachute predicates and bloom filters.

Every scan applies its filters in a fixed order: base predicates, then
parachute predicates, then the bloom filters pushed from completed builds.
"""

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .catalog import Catalog
from .errors import ExecutionError, OracleMismatchError, SchemaLookupError
from .planner import (
    BlockedPair,
    ColumnRef,
    FlowAnalyzer,
    FlowDirection,
    FlowMode,
    PlanNode,
    Query,
    QueryPlan,
    RewriteWarning,
    blocked_pairs,
    drop_parachutes,
    join_condition,
)
from .predicates import conjunction_mask
from .schema import LogicalType
from .storage import ColumnVector, Database

logger = logging.getLogger(__name__)

_MASK32 = np.uint64(0xFFFFFFFF)


class ExecutionMode(Enum):
    OFF = "off"
    PSF = "psf"
    PARACHUTE = "parachute"
    BOTH = "both"

    @classmethod
    def from_string(cls, value: str) -> 'ExecutionMode':
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"Invalid execution mode: {value}. Must be one of off, psf, parachute, both")

    @property
    def uses_bloom(self) -> bool:
        return self in (ExecutionMode.PSF, ExecutionMode.BOTH)

    @property
    def uses_parachutes(self) -> bool:
        return self in (ExecutionMode.PARACHUTE, ExecutionMode.BOTH)

    @property
    def flow_mode(self) -> FlowMode:
        """Information flow the host system provides on its own."""
        return FlowMode.PSF if self.uses_bloom else FlowMode.NONE


@dataclass(frozen=True)
class EngineConfig:
    bloom_bits: int = 1 << 16
    bloom_hashes: int = 2
    max_fill: float = 0.34
    adaptive_window: int = 4000
    max_pass_ratio: float = 0.6
    batch_size: int = 2048
    hash_seed: int = 0

    def __post_init__(self):
        if self.bloom_hashes != 2:
            raise ValueError(f"bloom filters use exactly 2 probe positions, got {self.bloom_hashes}")
        if not 1 <= self.bloom_bits <= 1 << 32:
            raise ValueError(f"bloom filter size must be in [1, 2^32] bits, got {self.bloom_bits}")
        if self.batch_size < 1 or self.adaptive_window < 1:
            raise ValueError("batch size and adaptive window must be positive")


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def hash_keys(column: ColumnVector, seed: int = 0) -> np.ndarray:
    """64-bit hash per value; the same function serves hash tables and bloom filters."""
    if column.logical_type is LogicalType.INT64:
        salted = column.values.astype(np.uint64) ^ np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        return _splitmix64(salted)
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    out = np.empty(len(column), dtype=np.uint64)
    for i, (value, null) in enumerate(zip(column.values, column.nulls)):
        data = b"" if null else value.encode("utf-8")
        out[i] = int.from_bytes(hashlib.blake2b(data, digest_size=8, key=key).digest(), "little")
    return out


class BloomFilter:
    """Register of ``bits`` bits with two probe positions per key.

    Both positions come from one 64-bit hash: its low and high 32-bit halves,
    each reduced to ``[0, bits)`` by multiply-shift.
    """

    def __init__(self, bits: int = 1 << 16):
        self.bits = bits
        self.words = np.zeros((bits + 63) // 64, dtype=np.uint64)
        self.bits_set = 0
        self.keys = 0
        self.discarded = False

    def positions(self, hashes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        hashes = np.asarray(hashes, dtype=np.uint64)
        m = np.uint64(self.bits)
        low = ((hashes & _MASK32) * m) >> np.uint64(32)
        high = ((hashes >> np.uint64(32)) * m) >> np.uint64(32)
        return low, high

    def insert(self, hashes: np.ndarray) -> None:
        for pos in self.positions(hashes):
            np.bitwise_or.at(self.words, pos >> np.uint64(6), np.uint64(1) << (pos & np.uint64(63)))
        self.keys += len(hashes)
        self.bits_set = int(np.unpackbits(self.words.view(np.uint8)).sum())

    def _test(self, pos: np.ndarray) -> np.ndarray:
        return ((self.words[pos >> np.uint64(6)] >> (pos & np.uint64(63))) & np.uint64(1)).astype(bool)

    def contains_many(self, hashes: np.ndarray) -> np.ndarray:
        low, high = self.positions(hashes)
        return self._test(low) & self._test(high)

    def contains(self, h: int) -> bool:
        return bool(self.contains_many(np.array([h], dtype=np.uint64))[0])

    @property
    def fill(self) -> float:
        return self.bits_set / self.bits


def bloom_build(hashes: np.ndarray, config: EngineConfig = EngineConfig()) -> BloomFilter:
    """Build a filter from build-side key hashes; flag it discarded above the fill cap."""
    bloom = BloomFilter(config.bloom_bits)
    bloom.insert(np.asarray(hashes, dtype=np.uint64))
    bloom.discarded = bloom.fill > config.max_fill
    if bloom.discarded:
        logger.debug("bloom filter discarded: %.3f of bits set by %d keys", bloom.fill, bloom.keys)
    return bloom


def bloom_probe(bloom: BloomFilter, h: int) -> bool:
    return bloom.contains(h)


@dataclass
class FilterMetrics:
    source: str
    target: str
    column: str
    built: bool = True
    discarded: bool = False
    disabled: bool = False
    fill: float = 0.0
    processed: int = 0
    passed: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "source": self.source,
            "target": self.target,
            "column": self.column,
            "built": self.built,
            "discarded": self.discarded,
            "disabled": self.disabled,
            "fill": round(self.fill, 6),
            "processed": self.processed,
            "passed": self.passed,
        }


class AdaptiveBloomProbe:
    """One bloom filter applied to one scan, disabled once it proves useless.

    After ``window`` rows have reached the filter it is disabled for the rest
    of the scan if it passed more than ``max_pass_ratio`` of them.
    """

    def __init__(self, bloom: BloomFilter, metrics: FilterMetrics, window: int = 4000,
                 max_pass_ratio: float = 0.6):
        self.bloom = bloom
        self.metrics = metrics
        self.window = window
        self.max_pass_ratio = max_pass_ratio
        self._decided = False

    @property
    def disabled(self) -> bool:
        return self.metrics.disabled

    def apply(self, hashes: np.ndarray) -> np.ndarray:
        n = len(hashes)
        if self.disabled or n == 0:
            return np.ones(n, dtype=bool)
        keep = self.bloom.contains_many(hashes)
        processed_before, passed_before = self.metrics.processed, self.metrics.passed
        if not self._decided and processed_before + n >= self.window:
            cut = self.window - processed_before
            self._decided = True
            passed_in_window = passed_before + int(keep[:cut].sum())
            if passed_in_window > self.max_pass_ratio * self.window:
                self.metrics.disabled = True
                keep[cut:] = True
                logger.debug("bloom filter %s -> %s disabled after %d rows (%d passed)",
                             self.metrics.source, self.metrics.target, self.window, passed_in_window)
        self.metrics.processed += n
        self.metrics.passed += int(keep.sum())
        return keep


@dataclass
class AliasMetrics:
    table: str
    scanned: int = 0
    after_base: int = 0
    after_parachute: int = 0
    after_bloom: int = 0
    emitted: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "table": self.table,
            "scanned": self.scanned,
            "after_base": self.after_base,
            "after_parachute": self.after_parachute,
            "after_bloom": self.after_bloom,
            "emitted": self.emitted,
        }


@dataclass
class ExecMetrics:
    query_name: str
    mode: ExecutionMode
    plan: Dict[str, Any]
    aliases: Dict[str, AliasMetrics] = field(default_factory=dict)
    filters: List[FilterMetrics] = field(default_factory=list)
    pipeline_seconds: Dict[int, float] = field(default_factory=dict)
    parachute_predicates: int = 0
    result_rows: int = 0
    dangling_fraction: Optional[float] = None
    emitted_rows: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def total_seconds(self) -> float:
        return sum(self.pipeline_seconds.values())

    def emitted_sets(self) -> Dict[str, Set[int]]:
        return {alias: set(rows.tolist()) for alias, rows in self.emitted_rows.items()}

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "query": self.query_name,
            "mode": self.mode.value,
            "plan": self.plan,
            "aliases": {alias: m.to_dict() for alias, m in self.aliases.items()},
            "filters": [f.to_dict() for f in self.filters],
            "pipeline_seconds": {str(p): s for p, s in sorted(self.pipeline_seconds.items())},
            "parachute_predicates": self.parachute_predicates,
            "result_rows": self.result_rows,
        }
        if self.dangling_fraction is not None:
            data["dangling_fraction"] = self.dangling_fraction
        return data

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


@dataclass
class JoinResult:
    """Matching row ids per alias; tuple ``i`` is ``rows[a][i]`` for every alias ``a``."""

    rows: Dict[str, np.ndarray]
    projection: List[ColumnRef]
    database: Database
    relations: Dict[str, str]

    def __len__(self) -> int:
        for rows in self.rows.values():
            return len(rows)
        return 0

    def tuples(self) -> List[Tuple[Any, ...]]:
        refs = self.projection or [
            ColumnRef(alias, name)
            for alias in sorted(self.rows)
            for name in self.database.table(self.relations[alias]).columns
        ]
        columns = []
        for ref in refs:
            column = self.database.table(self.relations[ref.alias]).column(ref.column)
            columns.append(column.take(self.rows[ref.alias]).to_pylist())
        return list(zip(*columns)) if columns else [() for _ in range(len(self))]

    def checksum(self) -> str:
        """Order-independent digest of the projected result multiset."""
        digest = hashlib.sha256()
        for row in sorted(repr(t) for t in self.tuples()):
            digest.update(row.encode("utf-8"))
            digest.update(b"\n")
        return digest.hexdigest()


def _key_codes(build_cols: Sequence[ColumnVector], probe_cols: Sequence[ColumnVector]):
    """Dense integer codes shared by both sides; rows with any NULL key are invalid."""
    nb = len(build_cols[0])
    per_column = []
    build_valid = np.ones(nb, dtype=bool)
    probe_valid = np.ones(len(probe_cols[0]), dtype=bool)
    for b, p in zip(build_cols, probe_cols):
        build_valid &= ~b.nulls
        probe_valid &= ~p.nulls
        values = np.concatenate([b.values, p.values])
        if values.dtype == object:
            values = np.where(np.concatenate([b.nulls, p.nulls]), "", values)
        per_column.append(np.unique(values, return_inverse=True)[1].reshape(-1))
    if len(per_column) == 1:
        codes = per_column[0]
    else:
        codes = np.unique(np.stack(per_column, axis=1), axis=0, return_inverse=True)[1].reshape(-1)
    return codes[:nb], build_valid, codes[nb:], probe_valid


def hash_join(build_cols: Sequence[ColumnVector], probe_cols: Sequence[ColumnVector]) -> Tuple[np.ndarray, np.ndarray]:
    """Equi-join two column lists; returns matching (build, probe) position pairs."""
    if len(build_cols[0]) == 0 or len(probe_cols[0]) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    build_codes, build_valid, probe_codes, probe_valid = _key_codes(build_cols, probe_cols)
    b_rows = np.flatnonzero(build_valid)
    order = np.argsort(build_codes[b_rows], kind="stable")
    sorted_codes = build_codes[b_rows][order]
    sorted_rows = b_rows[order]
    p_rows = np.flatnonzero(probe_valid)
    p_codes = probe_codes[p_rows]
    lo = np.searchsorted(sorted_codes, p_codes, side="left")
    hi = np.searchsorted(sorted_codes, p_codes, side="right")
    counts = hi - lo
    total = int(counts.sum())
    probe_idx = np.repeat(p_rows, counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    build_idx = sorted_rows[np.repeat(lo, counts) + offsets]
    return build_idx.astype(np.int64), probe_idx.astype(np.int64)


@dataclass
class _PendingFilter:
    bloom: BloomFilter
    column: str
    metrics: FilterMetrics


class Executor:
    """Runs one query plan in one mode."""

    def __init__(self, database: Database, plan: QueryPlan, query: Query, mode: ExecutionMode,
                 config: EngineConfig = EngineConfig(), catalog: Optional[Catalog] = None):
        plan.validate(query)
        query.validate(database.schema)
        self.database = database
        self.plan = plan
        self.query = query
        self.mode = mode
        self.config = config
        self.catalog = catalog
        self.analyzer = FlowAnalyzer(query, plan, FlowMode.PSF)
        self.pipelines = self.analyzer.pipelines
        self.classes = query.join_classes()
        self.metrics = ExecMetrics(query.name, mode, plan.to_dict())
        self._results: Dict[int, Dict[str, np.ndarray]] = {}
        self._pending: Dict[str, List[_PendingFilter]] = {}
        self._scanned: Set[str] = set()
        self._check_parachutes()

    def _table(self, alias: str):
        return self.database.table(self.query.table_of(alias))

    def _check_parachutes(self) -> None:
        if not self.mode.uses_parachutes:
            return
        for alias, preds in self.query.parachute_predicates.items():
            table = self._table(alias)
            for pred in preds:
                if pred.column not in table.packed:
                    raise ExecutionError(
                        f"parachute predicate on {alias} reads {pred.column}, which is not attached to {table.name}"
                    )
                if self.catalog is not None and pred.descriptor_id is not None:
                    try:
                        self.catalog.get(pred.descriptor_id)
                    except SchemaLookupError:
                        raise ExecutionError(f"parachute predicate on {alias} names unknown descriptor {pred.descriptor_id}")
                self.metrics.parachute_predicates += 1

    def _column(self, alias: str, name: str) -> ColumnVector:
        try:
            return self._table(alias).column(name)
        except SchemaLookupError as e:
            raise ExecutionError(f"alias {alias}: {e}")

    def scan(self, alias: str) -> np.ndarray:
        """Row ids of ``alias`` that survive its filters."""
        table = self._table(alias)
        m = self.metrics.aliases.setdefault(alias, AliasMetrics(table.name))
        n = table.row_count
        m.scanned = n
        keep = conjunction_mask(self.query.predicates_of(alias), lambda c: self._column(alias, c), n)
        m.after_base = int(keep.sum())
        if self.mode.uses_parachutes:
            for pred in self.query.parachutes_of(alias):
                rows = np.flatnonzero(keep)
                codes = table.packed_column(pred.column).unpack(rows)
                keep[rows] = pred.evaluate_many(codes)
        m.after_parachute = int(keep.sum())
        rows = np.flatnonzero(keep)
        probes = []
        for pending in self._pending.pop(alias, []):
            probe = AdaptiveBloomProbe(pending.bloom, pending.metrics, self.config.adaptive_window,
                                       self.config.max_pass_ratio)
            hashes = hash_keys(self._column(alias, pending.column), self.config.hash_seed)
            probes.append((probe, hashes))
        if probes:
            survivors = []
            for start in range(0, len(rows), self.config.batch_size):
                batch = rows[start:start + self.config.batch_size]
                for probe, hashes in probes:
                    batch = batch[probe.apply(hashes[batch])]
                survivors.append(batch)
            rows = np.concatenate(survivors) if survivors else rows
        m.after_bloom = len(rows)
        m.emitted = len(rows)
        self.metrics.emitted_rows[alias] = rows
        self._scanned.add(alias)
        return rows

    def _key_columns(self, relation: Dict[str, np.ndarray], refs: List[ColumnRef]) -> List[ColumnVector]:
        return [self._column(ref.alias, ref.column).take(relation[ref.alias]) for ref in refs]

    def _push_filters(self, node: PlanNode, build: Dict[str, np.ndarray], pipeline_id: int) -> None:
        """Bloom filters from a finished build to every later probe scan it can reach."""
        build_aliases = set(build)
        for edge in join_condition(node, self.query):
            build_ref = edge.left if edge.left.alias in build_aliases else edge.right
            cls = self.classes.get(build_ref)
            column = self._column(build_ref.alias, build_ref.column).take(build[build_ref.alias])
            valid = ~column.nulls
            hashes = hash_keys(column, self.config.hash_seed)[valid]
            bloom = None
            for target in self.query.aliases:
                if target in build_aliases or target in self._scanned or not self.pipelines.is_probe[target]:
                    continue
                if self.pipelines.of(target) < pipeline_id:
                    continue
                if not any(self.analyzer.flows(b, target) for b in build_aliases):
                    continue
                columns = [ref.column for ref, c in self.classes.items() if c == cls and ref.alias == target]
                if not columns:
                    continue
                if bloom is None:
                    bloom = bloom_build(np.unique(hashes), self.config)
                for name in columns:
                    metrics = FilterMetrics(
                        source=str(build_ref), target=target, column=name,
                        discarded=bloom.discarded, fill=bloom.fill,
                    )
                    self.metrics.filters.append(metrics)
                    if bloom.discarded:
                        logger.warning("bloom filter %s -> %s.%s discarded (fill %.3f)", build_ref, target, name, bloom.fill)
                        continue
                    self._pending.setdefault(target, []).append(_PendingFilter(bloom, name, metrics))

    def _join(self, node: PlanNode, build: Dict[str, np.ndarray], probe: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        build_aliases = set(build)
        build_refs, probe_refs = [], []
        for edge in join_condition(node, self.query):
            if edge.left.alias in build_aliases:
                build_refs.append(edge.left)
                probe_refs.append(edge.right)
            else:
                build_refs.append(edge.right)
                probe_refs.append(edge.left)
        b_idx, p_idx = hash_join(self._key_columns(build, build_refs), self._key_columns(probe, probe_refs))
        out = {alias: rows[b_idx] for alias, rows in build.items()}
        out.update({alias: rows[p_idx] for alias, rows in probe.items()})
        return out

    def _run_pipeline(self, root: PlanNode) -> Dict[str, np.ndarray]:
        chain = []
        node = root
        while not node.is_leaf:
            chain.append(node)
            node = node.probe
        probe_alias = node.alias
        pipeline_id = self.pipelines.of(probe_alias)
        start = time.perf_counter()
        builds = []
        for join in reversed(chain):
            if join.build.is_leaf:
                alias = join.build.alias
                build = {alias: self.scan(alias)}
            else:
                build = self._results[id(join.build)]
            if self.mode.uses_bloom:
                self._push_filters(join, build, pipeline_id)
            builds.append((join, build))
        relation = {probe_alias: self.scan(probe_alias)}
        for join, build in builds:
            relation = self._join(join, build, relation)
        self.metrics.pipeline_seconds[pipeline_id] = time.perf_counter() - start
        return relation

    def _pipeline_roots(self) -> List[PlanNode]:
        """Pipeline roots in completion order."""
        roots = []

        def visit(root: PlanNode):
            node = root
            chain = []
            while not node.is_leaf:
                chain.append(node)
                node = node.probe
            for join in reversed(chain):
                if not join.build.is_leaf:
                    visit(join.build)
            roots.append(root)

        visit(self.plan.root)
        return roots

    def run(self) -> Tuple[JoinResult, ExecMetrics]:
        relation: Dict[str, np.ndarray] = {}
        for root in self._pipeline_roots():
            relation = self._run_pipeline(root)
            self._results[id(root)] = relation
        result = JoinResult(relation, list(self.query.projection), self.database, dict(self.query.relations))
        self.metrics.result_rows = len(result)
        logger.info("%s in mode %s: %d result rows, %.4fs", self.query.name, self.mode.value,
                    len(result), self.metrics.total_seconds)
        return result, self.metrics


def execute(database: Database, plan: QueryPlan, query: Query, mode: ExecutionMode = ExecutionMode.OFF,
            config: EngineConfig = EngineConfig(), catalog: Optional[Catalog] = None) -> Tuple[JoinResult, ExecMetrics]:
    """Run ``plan`` for ``query``; parachute predicates are applied only in modes parachute and both.

    Raises:
        PlanError: the plan does not match the query
        ExecutionError: a referenced column or parachute is missing
    """
    return Executor(database, plan, query, mode, config, catalog).run()


def prepare_query(query: Query, plan: QueryPlan, database: Database, catalog: Catalog, mode: ExecutionMode,
                  direction: FlowDirection = FlowDirection.DOWN) -> Tuple[Query, List[BlockedPair], List[RewriteWarning]]:
    """Rewrite ``query`` with parachute predicates for the flow the mode leaves blocked."""
    if not mode.uses_parachutes:
        return query.without_parachutes(), [], []
    analyzer = FlowAnalyzer(query, plan, mode.flow_mode)
    pairs = blocked_pairs(plan, database.schema, query, catalog, mode.flow_mode, direction, analyzer)
    rewritten, warnings = drop_parachutes(query.without_parachutes(), pairs)
    return rewritten, pairs, warnings


def dangling_counts(metrics: ExecMetrics, oracle_sets) -> Tuple[int, int]:
    """(dangling rows emitted to a join, dangling rows in total) summed over aliases.

    Raises:
        OracleMismatchError: the oracle sets belong to another query
    """
    if oracle_sets.query_name != metrics.query_name:
        raise OracleMismatchError(
            f"oracle sets are for query {oracle_sets.query_name}, metrics for {metrics.query_name}"
        )
    emitted_dangling = 0
    total_dangling = 0
    for alias, m in metrics.aliases.items():
        survivors = len(oracle_sets.rows.get(alias, ()))
        emitted_dangling += m.emitted - survivors
        total_dangling += m.scanned - survivors
    return emitted_dangling, total_dangling


def dangling_report(metrics: ExecMetrics, oracle_sets) -> float:
    """Share of dangling rows that still reached a join; 0 when there are none."""
    emitted_dangling, total_dangling = dangling_counts(metrics, oracle_sets)
    fraction = emitted_dangling / total_dangling if total_dangling else 0.0
    metrics.dangling_fraction = fraction
    return fraction
