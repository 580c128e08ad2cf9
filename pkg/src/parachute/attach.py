"""Building and maintaining parachute columns on FK tables."""

import graphlib
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .catalog import (
    Catalog,
    DescriptorKind,
    ParachuteDescriptor,
    helper_column_name,
    parachute_column_name,
)
from .errors import (
    AttachOrderError,
    DanglingForeignKeyError,
    DescriptorError,
    DuplicateKeyError,
    IngestError,
    SchemaLookupError,
    UnknownKeyError,
)
from .fingerprint import STRATEGIES, BytePartition, fingerprint_column
from .histogram import HistogramKind, WeightedSample, build_equidepth, estimate_distribution
from .json_schemas import load_document
from .schema import Schema, fk_graph
from .storage import Database, PackedColumn, TableData, key_index

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttachConfig:
    sample_size: int = 10_000
    seed: int = 0
    relaxed: bool = False
    skew_threshold: float = 4.0
    partition_strategy: str = "round-robin"


@dataclass(frozen=True)
class AttachSpec:
    fk_table: str
    pk_table: str
    source_column: str
    kind: DescriptorKind
    pbw: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "fk_table": self.fk_table,
            "pk_table": self.pk_table,
            "source_column": self.source_column,
            "kind": self.kind.value,
            "pbw": self.pbw,
        }


def load_attach_specs(source: Union[str, list], pbw: Optional[int] = None) -> List[AttachSpec]:
    """Read an attach specification; ``pbw`` overrides every entry.

    Raises:
        jsonschema.ValidationError: If the document doesn't conform to the schema
        ValueError: If an entry has no pbw and no override is given
    """
    specs = []
    for entry in load_document(source, "attach_spec"):
        width = pbw if pbw is not None else entry.get("pbw")
        if width is None:
            raise ValueError(
                f"no pbw for {entry['fk_table']}.{parachute_column_name(entry['pk_table'], entry['source_column'])}"
            )
        specs.append(AttachSpec(
            fk_table=entry["fk_table"],
            pk_table=entry["pk_table"],
            source_column=entry["source_column"],
            kind=DescriptorKind.from_string(entry["kind"]),
            pbw=width,
        ))
    return specs


@dataclass
class AttachStats:
    """Outcome of one attach or maintenance pass over an FK table."""

    fk_table: str
    rows: int = 0
    descriptors: List[str] = field(default_factory=list)
    lookups: int = 0
    lookup_seconds: float = 0.0
    write_seconds: float = 0.0
    bytes_added: int = 0
    descriptor_bytes: Dict[str, int] = field(default_factory=dict)
    helper_bytes: int = 0
    base_bytes: int = 0

    @property
    def seconds(self) -> float:
        return self.lookup_seconds + self.write_seconds

    @property
    def extra_fraction(self) -> float:
        return self.bytes_added / self.base_bytes if self.base_bytes else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "fk_table": self.fk_table,
            "rows": self.rows,
            "descriptors": list(self.descriptors),
            "lookups": self.lookups,
            "lookup_seconds": self.lookup_seconds,
            "write_seconds": self.write_seconds,
            "seconds": self.seconds,
            "bytes_added": self.bytes_added,
            "descriptor_bytes": dict(self.descriptor_bytes),
            "helper_bytes": self.helper_bytes,
            "extra_fraction": self.extra_fraction,
        }


@dataclass
class _KeyCodes:
    """Sorted distinct PK keys and the code each one propagates."""

    keys: np.ndarray
    codes: np.ndarray

    def lookup(self, fk_keys: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        codes = np.zeros(len(fk_keys), dtype=np.uint64)
        if len(self.keys) == 0 or len(fk_keys) == 0:
            return codes, np.zeros(len(fk_keys), dtype=bool)
        pos = np.searchsorted(self.keys, fk_keys)
        pos = np.minimum(pos, len(self.keys) - 1)
        found = np.asarray(self.keys[pos] == fk_keys, dtype=bool)
        codes[found] = self.codes[pos[found]]
        return codes, found


def attach_order(schema: Schema, pending: Iterable[Union[AttachSpec, ParachuteDescriptor]]) -> List[str]:
    """Topological order of the tables involved in ``pending``.

    Every table comes after the tables it references.

    Raises:
        AttachOrderError: listing the tables of an FK cycle
    """
    tables: Set[str] = set()
    for item in pending:
        tables.update((item.fk_table, item.pk_table))
    sorter = graphlib.TopologicalSorter()
    for table, referenced in sorted(fk_graph(schema, tables).items()):
        sorter.add(table, *sorted(pk for pk in referenced if pk in tables))
    try:
        return list(sorter.static_order())
    except graphlib.CycleError as e:
        raise AttachOrderError(e.args[1])


class ParachuteAttacher:
    """Attaches parachute columns and keeps them current under writes."""

    def __init__(self, database: Database, catalog: Catalog, config: Optional[AttachConfig] = None):
        self.database = database
        self.catalog = catalog
        self.config = config or AttachConfig()
        self._key_codes: Dict[int, _KeyCodes] = {}

    # -- descriptors ---------------------------------------------------------

    def partition_for(self, pbw: int, sample: Optional[Sequence[str]] = None) -> BytePartition:
        try:
            strategy = STRATEGIES[self.config.partition_strategy]()
        except KeyError:
            raise DescriptorError(f"unknown partition strategy {self.config.partition_strategy}")
        return strategy.partition(pbw, sample)

    def build_descriptor(self, spec: AttachSpec) -> ParachuteDescriptor:
        """Build the representation for ``spec`` (sampling the FK-PK join for histograms)."""
        pk_data = self.database.table(spec.pk_table)
        if spec.source_column in pk_data.packed:
            return self._transitive_descriptor(spec)
        column_def = self.database.schema.table(spec.pk_table).column(spec.source_column)
        source = pk_data.column(spec.source_column)
        nullable = column_def.nullable or source.has_nulls
        relaxed = self.config.relaxed
        if spec.kind is DescriptorKind.STRING_FINGERPRINT:
            partition = self.partition_for(spec.pbw)
            return ParachuteDescriptor(
                fk_table=spec.fk_table,
                pk_table=spec.pk_table,
                source_column=spec.source_column,
                pbw=spec.pbw,
                kind=spec.kind,
                representation=partition,
                helper_column_name=helper_column_name(spec.source_column, spec.pbw),
                nullable_source=nullable,
                relaxed=relaxed,
            )
        sample = estimate_distribution(
            self.database, spec.fk_table, spec.pk_table, spec.source_column,
            self.config.sample_size, self.config.seed, relaxed=relaxed,
        )
        sample = WeightedSample(sample.values, sample.frequencies, sample.contains_null or nullable)
        kind = HistogramKind.NUMERIC if spec.kind is DescriptorKind.NUMERIC_HISTOGRAM else HistogramKind.LOWCARD
        hist = build_equidepth(sample, spec.pbw, kind, reserved_slots=1 if relaxed else 0)
        return ParachuteDescriptor(
            fk_table=spec.fk_table,
            pk_table=spec.pk_table,
            source_column=spec.source_column,
            pbw=spec.pbw,
            kind=spec.kind,
            representation=hist,
            nullable_source=hist.nullable,
            relaxed=relaxed,
        )

    def _transitive_descriptor(self, spec: AttachSpec) -> ParachuteDescriptor:
        upstream = next(
            (d for d in self.catalog.for_fk_table(spec.pk_table) if d.column_name == spec.source_column),
            None,
        )
        if upstream is None:
            raise DescriptorError(f"{spec.pk_table}.{spec.source_column} is not a registered parachute column")
        return ParachuteDescriptor(
            fk_table=spec.fk_table,
            pk_table=spec.pk_table,
            source_column=spec.source_column,
            pbw=upstream.pbw,
            kind=upstream.kind,
            representation=upstream.representation,
            nullable_source=upstream.nullable_source,
            relaxed=upstream.relaxed,
            transitive_from=upstream.id,
        )

    def build_helper(self, pk_table: str, source_column: str, partition: BytePartition) -> str:
        """Materialize fingerprints of ``pk_table.source_column`` on the PK table itself."""
        pk_data = self.database.table(pk_table)
        source = pk_data.column(source_column)
        name = helper_column_name(source_column, partition.pbw)
        codes = fingerprint_column(partition, source.values, source.nulls)
        pk_data.packed[name] = PackedColumn.pack(codes, partition.pbw)
        self._invalidate(pk_table)
        logger.debug("helper %s.%s built over %d rows", pk_table, name, len(codes))
        return name

    # -- code computation ----------------------------------------------------

    def _invalidate(self, pk_table: str) -> None:
        for descriptor in self.catalog.for_pk_table(pk_table):
            self._key_codes.pop(descriptor.id, None)

    def _pk_codes(self, descriptor: ParachuteDescriptor) -> np.ndarray:
        pk_data = self.database.table(descriptor.pk_table)
        if descriptor.transitive_from is not None:
            if descriptor.source_column not in pk_data.packed:
                raise DescriptorError(
                    f"{descriptor.pk_table}.{descriptor.source_column} is not attached yet; attach {descriptor.pk_table} first"
                )
            return pk_data.packed[descriptor.source_column].unpack()
        if descriptor.kind is DescriptorKind.STRING_FINGERPRINT:
            if descriptor.helper_column_name not in pk_data.packed:
                self.build_helper(descriptor.pk_table, descriptor.source_column, descriptor.partition)
            return pk_data.packed[descriptor.helper_column_name].unpack()
        source = pk_data.column(descriptor.source_column)
        return descriptor.histogram.bin_many(source.values, source.nulls)

    def key_codes(self, descriptor: ParachuteDescriptor) -> _KeyCodes:
        """Code per distinct PK key; duplicate keys (relaxed) are combined."""
        cached = self._key_codes.get(descriptor.id)
        if cached is not None:
            return cached
        edge = self.catalog.fk_edge_of(descriptor)
        pk_data = self.database.table(descriptor.pk_table)
        key_column = pk_data.column(edge.pk_column)
        if key_column.has_nulls:
            raise IngestError(f"key column {descriptor.pk_table}.{edge.pk_column} holds NULL")
        codes = self._pk_codes(descriptor)
        keys, inverse, counts = np.unique(key_column.values, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if len(keys) and counts.max() > 1:
            if not descriptor.relaxed:
                raise DuplicateKeyError(descriptor.pk_table, edge.pk_column, keys[int(np.argmax(counts > 1))])
            order = np.argsort(inverse, kind="stable")
            starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
            grouped = codes[order]
            if descriptor.kind is DescriptorKind.STRING_FINGERPRINT:
                combined = np.bitwise_or.reduceat(grouped, starts)
            else:
                low = np.minimum.reduceat(grouped, starts)
                high = np.maximum.reduceat(grouped, starts)
                combined = np.where(low == high, low, np.uint64(descriptor.marker))
        else:
            combined = np.zeros(len(keys), dtype=np.uint64)
            combined[inverse] = codes
        result = _KeyCodes(keys, combined.astype(np.uint64))
        self._key_codes[descriptor.id] = result
        return result

    def compute_codes(self, descriptor: ParachuteDescriptor, rows: Optional[np.ndarray] = None) -> Tuple[np.ndarray, Set[Any], int]:
        """Parachute codes for the given FK rows.

        Returns:
            (codes, dangling keys, number of join lookups performed)

        Raises:
            DanglingForeignKeyError: a key has no PK partner (strict mode)
        """
        edge = self.catalog.fk_edge_of(descriptor)
        fk_data = self.database.table(descriptor.fk_table)
        key_column = fk_data.column(edge.fk_column)
        if rows is None:
            rows = np.arange(fk_data.row_count, dtype=np.int64)
        values = key_column.values[rows]
        present = ~key_column.nulls[rows]
        codes = np.zeros(len(rows), dtype=np.uint64)
        found_codes, found = self.key_codes(descriptor).lookup(values[present])
        codes[present] = found_codes
        dangling = np.zeros(len(rows), dtype=bool)
        dangling[present] = ~found
        dangling_keys: Set[Any] = set()
        if dangling.any():
            first = int(np.flatnonzero(dangling)[0])
            if not descriptor.relaxed:
                raise DanglingForeignKeyError(
                    descriptor.fk_table, int(rows[first]), key_column.get(int(rows[first])), descriptor.pk_table
                )
            codes[dangling] = np.uint64(descriptor.marker)
            dangling_keys = {key_column.get(int(r)) for r in rows[dangling]}
        return codes, dangling_keys, int(present.sum())

    # -- attach --------------------------------------------------------------

    def attach(self, fk_table: str, descriptors: Optional[List[ParachuteDescriptor]] = None) -> AttachStats:
        """Write every descriptor of ``fk_table`` in one pass over the table."""
        if descriptors is None:
            descriptors = self.catalog.for_fk_table(fk_table)
        for descriptor in descriptors:
            if descriptor.fk_table != fk_table:
                raise DescriptorError(f"descriptor {descriptor.column_name} targets {descriptor.fk_table}, not {fk_table}")
        fk_data = self.database.table(fk_table)
        stats = AttachStats(fk_table, rows=fk_data.row_count, base_bytes=fk_data.base_bytes)

        started = time.perf_counter()
        computed = []
        for descriptor in descriptors:
            codes, dangling, lookups = self.compute_codes(descriptor)
            computed.append((descriptor, codes, dangling))
            stats.lookups += lookups
        stats.lookup_seconds = time.perf_counter() - started

        started = time.perf_counter()
        for descriptor, codes, _ in computed:
            column = PackedColumn.pack(codes, descriptor.pbw)
            fk_data.packed[descriptor.column_name] = column
            stats.descriptors.append(descriptor.column_name)
            stats.descriptor_bytes[descriptor.column_name] = column.extra_bytes
            stats.bytes_added += column.extra_bytes
        stats.write_seconds = time.perf_counter() - started

        for descriptor, _, dangling in computed:
            self.catalog.pending.pop((fk_table, descriptor.pk_table), None)
        for descriptor, _, dangling in computed:
            self.catalog.add_pending(fk_table, descriptor.pk_table, dangling)
            if descriptor.helper_column_name:
                helper = self.database.table(descriptor.pk_table).packed.get(descriptor.helper_column_name)
                if helper is not None:
                    stats.helper_bytes += helper.extra_bytes
        self._invalidate(fk_table)
        logger.info(
            "attached %d parachute column(s) to %s: %d rows, %d bytes, %.4fs",
            len(descriptors), fk_table, stats.rows, stats.bytes_added, stats.seconds,
        )
        return stats

    def attach_all(self, specs: List[AttachSpec]) -> List[AttachStats]:
        """Build, register and attach ``specs`` in topological order."""
        order = attach_order(self.database.schema, specs)
        results = []
        for table in order:
            table_specs = [s for s in specs if s.fk_table == table]
            if not table_specs:
                continue
            descriptors = []
            for spec in table_specs:
                descriptor = self.build_descriptor(spec)
                descriptor_id = self.catalog.register(descriptor)
                descriptors.append(self.catalog.get(descriptor_id))
            results.append(self.attach(table, descriptors))
        return results

    # -- maintenance ---------------------------------------------------------

    def maintain_insert(self, fk_table: str, batch: TableData) -> AttachStats:
        """Append ``batch`` to ``fk_table`` and compute parachute values for it only.

        Histograms are not rebuilt; out-of-range values clamp to the outer bins.
        """
        fk_data = self.database.table(fk_table)
        stats = AttachStats(fk_table, rows=batch.row_count, base_bytes=fk_data.base_bytes)
        if batch.row_count == 0:
            return stats
        if set(batch.columns) != set(fk_data.columns):
            raise IngestError(f"insert batch columns {sorted(batch.columns)} do not match {fk_table}")
        start = fk_data.row_count
        started = time.perf_counter()
        computed = []
        try:
            fk_data.append_columns(batch)
            rows = np.arange(start, fk_data.row_count, dtype=np.int64)
            for descriptor in self.catalog.for_fk_table(fk_table):
                codes, dangling, lookups = self.compute_codes(descriptor, rows)
                computed.append((descriptor, codes, dangling))
                stats.lookups += lookups
        except BaseException:
            # packed columns are untouched until every code is known
            fk_data.columns = {name: column.take(np.arange(start)) for name, column in fk_data.columns.items()}
            raise
        stats.lookup_seconds = time.perf_counter() - started

        started = time.perf_counter()
        for descriptor, codes, dangling in computed:
            column = fk_data.packed_column(descriptor.column_name)
            before = column.extra_bytes
            column.append(codes)
            stats.descriptors.append(descriptor.column_name)
            stats.bytes_added += column.extra_bytes - before
            self.catalog.add_pending(fk_table, descriptor.pk_table, dangling)
        self._extend_helpers(fk_table, rows)
        stats.write_seconds = time.perf_counter() - started

        self._invalidate(fk_table)
        self._patch_pending(fk_table)
        logger.debug("inserted %d rows into %s with %d lookups", batch.row_count, fk_table, stats.lookups)
        return stats

    def maintain_update(self, pk_table: str, column: str, updates: Mapping[Any, Any]) -> int:
        """Set ``pk_table.column`` for the given keys and recompute their FK partners.

        Helper columns are refreshed first, and transitive parachutes copying a
        recomputed column cascade. Pending dangling keys of ``pk_table`` are
        patched on the way.

        Returns:
            Number of FK rows recomputed

        Raises:
            UnknownKeyError: If a key is not in ``pk_table``
        """
        if not updates:
            return 0
        pk_data = self.database.table(pk_table)
        primary_key = self.database.schema.table(pk_table).primary_key
        if primary_key is None:
            raise SchemaLookupError(f"table {pk_table} declares no primary key")
        relaxed = self.config.relaxed or any(d.relaxed for d in self.catalog.for_pk_table(pk_table))
        index = key_index(pk_data, primary_key, relaxed=relaxed)
        target = pk_data.column(column)
        touched_rows = []
        for key, value in updates.items():
            rows = index.get(key)
            if rows is None:
                raise UnknownKeyError(f"key {key!r} is not in {pk_table}.{primary_key}")
            for row in (rows if relaxed else [rows]):
                target.set(row, value)
                touched_rows.append(row)
        self._invalidate(pk_table)

        touched = np.array(sorted(set(touched_rows)), dtype=np.int64)
        for descriptor in self.catalog.for_pk_table(pk_table):
            if descriptor.helper_column_name and descriptor.source_column == column:
                helper = pk_data.packed.get(descriptor.helper_column_name)
                if helper is not None:
                    helper.set_values(touched, fingerprint_column(descriptor.partition, target.values[touched], target.nulls[touched]))

        keys = set(updates)
        queue = [(d, keys) for d in self.catalog.for_pk_table(pk_table) if d.source_column == column]
        recomputed = self._drain(queue)
        return recomputed + self._patch_pending(pk_table)

    def insert_pk(self, pk_table: str, batch: TableData) -> int:
        """Append rows to a PK table. Existing parachutes stay valid; pending keys get patched.

        Returns:
            Number of FK rows patched
        """
        pk_data = self.database.table(pk_table)
        if batch.row_count == 0:
            return 0
        if set(batch.columns) != set(pk_data.columns):
            raise IngestError(f"insert batch columns {sorted(batch.columns)} do not match {pk_table}")
        start = pk_data.row_count
        pk_data.append_columns(batch)
        rows = np.arange(start, pk_data.row_count, dtype=np.int64)
        for descriptor in self.catalog.for_fk_table(pk_table):
            codes, dangling, _ = self.compute_codes(descriptor, rows)
            pk_data.packed_column(descriptor.column_name).append(codes)
            self.catalog.add_pending(pk_table, descriptor.pk_table, dangling)
        self._extend_helpers(pk_table, rows)
        self._invalidate(pk_table)
        return self._patch_pending(pk_table)

    def _extend_helpers(self, table: str, rows: np.ndarray) -> None:
        """Fingerprint appended rows into the helper columns stored on ``table``."""
        data = self.database.table(table)
        helpers = {d.helper_column_name: d for d in self.catalog.for_pk_table(table) if d.helper_column_name}
        for name, descriptor in helpers.items():
            helper = data.packed.get(name)
            if helper is not None and helper.row_count < data.row_count:
                source = data.column(descriptor.source_column)
                helper.append(fingerprint_column(descriptor.partition, source.values[rows], source.nulls[rows]))

    def _recompute(self, descriptor: ParachuteDescriptor, keys: Set[Any]) -> Tuple[np.ndarray, Set[Any]]:
        edge = self.catalog.fk_edge_of(descriptor)
        fk_data = self.database.table(descriptor.fk_table)
        key_column = fk_data.column(edge.fk_column)
        wanted = np.array(list(keys), dtype=key_column.values.dtype)
        rows = np.flatnonzero(np.isin(key_column.values, wanted) & ~key_column.nulls)
        if len(rows) == 0:
            return rows, set()
        codes, dangling, _ = self.compute_codes(descriptor, rows)
        fk_data.packed_column(descriptor.column_name).set_values(rows, codes)
        self._invalidate(descriptor.fk_table)
        return rows, dangling

    def _drain(self, queue: List[Tuple[ParachuteDescriptor, Set[Any]]]) -> int:
        total = 0
        while queue:
            descriptor, keys = queue.pop(0)
            rows, _ = self._recompute(descriptor, keys)
            total += len(rows)
            dependents = self.catalog.dependents_of(descriptor.id)
            if dependents and len(rows):
                primary_key = self.database.schema.table(descriptor.fk_table).primary_key
                fk_data = self.database.table(descriptor.fk_table)
                changed = {fk_data.column(primary_key).get(int(r)) for r in rows}
                queue.extend((d, changed) for d in dependents)
        return total

    def _patch_pending(self, pk_table: str) -> int:
        total = 0
        by_fk: Dict[str, List[ParachuteDescriptor]] = {}
        for descriptor in self.catalog.for_pk_table(pk_table):
            by_fk.setdefault(descriptor.fk_table, []).append(descriptor)
        for fk_table, descriptors in by_fk.items():
            keys = self.catalog.pending_keys(fk_table, pk_table)
            if not keys:
                continue
            still_dangling: Set[Any] = set()
            for descriptor in descriptors:
                rows, dangling = self._recompute(descriptor, keys)
                total += len(rows)
                still_dangling |= dangling
            self.catalog.clear_pending(fk_table, pk_table, keys - still_dangling)
            logger.debug("patched %d pending key(s) of %s -> %s", len(keys - still_dangling), fk_table, pk_table)
        return total

    def skew_check(self, fk_table: str, descriptor: ParachuteDescriptor, threshold: Optional[float] = None) -> bool:
        """True iff the heaviest value bin exceeds ``threshold`` times the mean bin weight."""
        if not descriptor.kind.uses_histogram:
            raise DescriptorError(f"{descriptor.column_name} is a fingerprint; skew applies to histograms")
        threshold = self.config.skew_threshold if threshold is None else threshold
        hist = descriptor.histogram
        codes = self.database.table(fk_table).packed_column(descriptor.column_name).unpack().astype(np.int64)
        in_range = (codes >= hist.first_value_bin) & (codes <= hist.last_value_bin)
        counts = np.bincount(codes[in_range] - hist.offset, minlength=hist.bins)
        if counts.sum() == 0:
            return False
        ratio = counts.max() / counts.mean()
        logger.debug("skew of %s.%s: %.3f (threshold %.3f)", fk_table, descriptor.column_name, ratio, threshold)
        return bool(ratio > threshold)
