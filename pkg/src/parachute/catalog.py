"""Registry of parachute descriptors built on FK tables."""

import json
import logging
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Set, Tuple, Union

from .errors import DescriptorError, SchemaLookupError
from .fingerprint import BytePartition, co_clusters_case_pairs
from .histogram import EquiDepthHistogram, HistogramKind
from .schema import ForeignKey, Schema
from .storage import MAX_PACKED_BITS

logger = logging.getLogger(__name__)

CATALOG_FORMAT_VERSION = 1
# value bins start at 1 whenever a NULL bin exists
NULL_BIN_CONVENTION = "null-bin-0"


class DescriptorKind(Enum):
    """How a parachute column encodes its source value."""
    NUMERIC_HISTOGRAM = "numeric-histogram"
    LOWCARD_STRING = "lowcard-string"
    STRING_FINGERPRINT = "string-fingerprint"

    @classmethod
    def from_string(cls, value: str) -> 'DescriptorKind':
        """Create a DescriptorKind from a string, case-insensitive, ``_`` or ``-`` separated."""
        try:
            return cls(value.lower().replace("_", "-"))
        except ValueError:
            raise ValueError(
                f"Invalid descriptor kind: {value}. Must be one of "
                "'numeric-histogram', 'lowcard-string' or 'string-fingerprint'"
            )

    @property
    def uses_histogram(self) -> bool:
        return self is not DescriptorKind.STRING_FINGERPRINT


Representation = Union[EquiDepthHistogram, BytePartition]


def parachute_column_name(pk_table: str, source_column: str) -> str:
    return f"parachute_{pk_table}_{source_column}"


def helper_column_name(source_column: str, pbw: int) -> str:
    return f"fingerprint_{source_column}_{pbw}"


@dataclass
class ParachuteDescriptor:
    """One parachute column on ``fk_table`` summarizing ``pk_table.source_column``.

    A transitive descriptor has ``transitive_from`` set to the id of the
    descriptor on ``pk_table`` whose column it copies; ``source_column`` then
    names that parachute column.
    """

    fk_table: str
    pk_table: str
    source_column: str
    pbw: int
    kind: DescriptorKind
    representation: Representation
    helper_column_name: Optional[str] = None
    nullable_source: bool = False
    relaxed: bool = False
    transitive_from: Optional[int] = None
    fk_column: Optional[str] = None
    id: Optional[int] = None

    @property
    def key(self) -> Tuple[str, str, str]:
        return (self.fk_table, self.pk_table, self.source_column)

    @property
    def column_name(self) -> str:
        return parachute_column_name(self.pk_table, self.source_column)

    @property
    def histogram(self) -> EquiDepthHistogram:
        if not isinstance(self.representation, EquiDepthHistogram):
            raise DescriptorError(f"descriptor {self.column_name} carries no histogram")
        return self.representation

    @property
    def partition(self) -> BytePartition:
        if not isinstance(self.representation, BytePartition):
            raise DescriptorError(f"descriptor {self.column_name} carries no byte partition")
        return self.representation

    @property
    def marker(self) -> Optional[int]:
        """Reserved code for rows without a usable partner (relaxed mode only)."""
        return (1 << self.pbw) - 1 if self.relaxed else None

    @property
    def ilike_sound(self) -> bool:
        return self.kind is DescriptorKind.STRING_FINGERPRINT and co_clusters_case_pairs(self.partition)

    def validate(self) -> None:
        """Check the descriptor's own invariants.

        Raises:
            DescriptorError: naming the violated invariant
        """
        if not isinstance(self.pbw, int) or self.pbw < 1:
            raise DescriptorError(f"{self.column_name}: pbw must be an integer >= 1, got {self.pbw}")
        if self.pbw > MAX_PACKED_BITS:
            raise DescriptorError(f"{self.column_name}: pbw {self.pbw} exceeds {MAX_PACKED_BITS} stored bits")
        if self.kind.uses_histogram:
            hist = self.representation
            if not isinstance(hist, EquiDepthHistogram):
                raise DescriptorError(f"{self.column_name}: {self.kind.value} needs an equi-depth histogram")
            expected = HistogramKind.NUMERIC if self.kind is DescriptorKind.NUMERIC_HISTOGRAM else HistogramKind.LOWCARD
            if hist.kind is not expected:
                raise DescriptorError(f"{self.column_name}: histogram kind {hist.kind.value} does not fit {self.kind.value}")
            reserved = (1 if hist.nullable else 0) + (1 if self.relaxed else 0)
            if hist.bins + reserved > (1 << self.pbw) or hist.pbw != self.pbw:
                raise DescriptorError(f"{self.column_name}: {hist.bins} bins do not fit in {self.pbw} bits")
            if self.helper_column_name is not None:
                raise DescriptorError(f"{self.column_name}: helper columns exist for string fingerprints only")
        else:
            partition = self.representation
            if not isinstance(partition, BytePartition):
                raise DescriptorError(f"{self.column_name}: string-fingerprint needs a byte partition")
            if partition.pbw != self.pbw:
                raise DescriptorError(
                    f"{self.column_name}: partition has {partition.pbw} clusters, expected {self.pbw}"
                )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "fk_table": self.fk_table,
            "pk_table": self.pk_table,
            "source_column": self.source_column,
            "fk_column": self.fk_column,
            "pbw": self.pbw,
            "kind": self.kind.value,
            "representation": self.representation.to_dict(),
            "helper_column_name": self.helper_column_name,
            "nullable_source": self.nullable_source,
            "relaxed": self.relaxed,
            "transitive_from": self.transitive_from,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ParachuteDescriptor':
        kind = DescriptorKind.from_string(data["kind"])
        if kind.uses_histogram:
            representation = EquiDepthHistogram.from_dict(data["representation"])
        else:
            representation = BytePartition.from_dict(data["representation"])
        return cls(
            fk_table=data["fk_table"],
            pk_table=data["pk_table"],
            source_column=data["source_column"],
            pbw=data["pbw"],
            kind=kind,
            representation=representation,
            helper_column_name=data.get("helper_column_name"),
            nullable_source=data.get("nullable_source", False),
            relaxed=data.get("relaxed", False),
            transitive_from=data.get("transitive_from"),
            fk_column=data.get("fk_column"),
            id=data.get("id"),
        )


@dataclass
class Catalog:
    """Schema plus the registered parachute descriptors.

    Descriptor ids are dense and follow registration order. Re-registering the
    same (fk_table, pk_table, source_column) triple replaces the descriptor
    and keeps its id.
    """

    schema: Schema
    descriptors: List[ParachuteDescriptor] = field(default_factory=list)
    pending: Dict[Tuple[str, str], Set[Any]] = field(default_factory=dict)

    def register(self, descriptor: ParachuteDescriptor) -> int:
        """Validate and store a descriptor; returns its id.

        Raises:
            DescriptorError: If an invariant of the descriptor does not hold
        """
        descriptor.validate()
        self._check_against_schema(descriptor)
        existing = self.find(*descriptor.key)
        if existing is not None:
            descriptor = replace(descriptor, id=existing.id)
            self.descriptors[existing.id] = descriptor
            logger.debug("replaced parachute %s on %s (id %d)", descriptor.column_name, descriptor.fk_table, descriptor.id)
        else:
            descriptor = replace(descriptor, id=len(self.descriptors))
            self.descriptors.append(descriptor)
            logger.debug("registered parachute %s on %s (id %d)", descriptor.column_name, descriptor.fk_table, descriptor.id)
        return descriptor.id

    def _check_against_schema(self, descriptor: ParachuteDescriptor) -> None:
        schema = self.schema
        for table in (descriptor.fk_table, descriptor.pk_table):
            if not schema.has_table(table):
                raise DescriptorError(f"descriptor references unknown table {table}")
        if descriptor.transitive_from is not None:
            if not 0 <= descriptor.transitive_from < len(self.descriptors):
                raise DescriptorError(f"transitive source descriptor {descriptor.transitive_from} is not registered")
            upstream = self.descriptors[descriptor.transitive_from]
            if upstream.fk_table != descriptor.pk_table or upstream.column_name != descriptor.source_column:
                raise DescriptorError(
                    f"{descriptor.column_name}: {descriptor.pk_table}.{descriptor.source_column} "
                    "is not the parachute it claims to copy"
                )
            if upstream.kind is not descriptor.kind or upstream.pbw != descriptor.pbw:
                raise DescriptorError(f"{descriptor.column_name}: transitive copy must keep kind and pbw")
        elif not schema.table(descriptor.pk_table).has_column(descriptor.source_column):
            raise DescriptorError(f"unknown source column {descriptor.pk_table}.{descriptor.source_column}")
        self.fk_edge_of(descriptor)

    def fk_edge_of(self, descriptor: ParachuteDescriptor) -> ForeignKey:
        """The FK edge a descriptor is attached along.

        Raises:
            DescriptorError: If ``fk_table`` holds no FK to ``pk_table``
        """
        edges = self.schema.fk_edges(descriptor.fk_table, descriptor.pk_table)
        if descriptor.fk_column is not None:
            edges = [e for e in edges if e.fk_column == descriptor.fk_column]
        if not edges:
            raise DescriptorError(f"no foreign key from {descriptor.fk_table} to {descriptor.pk_table}")
        return edges[0]

    def find(self, fk_table: str, pk_table: str, source_column: str) -> Optional[ParachuteDescriptor]:
        for descriptor in self.descriptors:
            if descriptor.key == (fk_table, pk_table, source_column):
                return descriptor
        return None

    def lookup(self, fk_table: str, pk_table: str, source_column: str) -> ParachuteDescriptor:
        descriptor = self.find(fk_table, pk_table, source_column)
        if descriptor is None:
            raise SchemaLookupError(f"no parachute on {fk_table} for {pk_table}.{source_column}")
        return descriptor

    def get(self, descriptor_id: int) -> ParachuteDescriptor:
        try:
            return self.descriptors[descriptor_id]
        except IndexError:
            raise SchemaLookupError(f"unknown descriptor id {descriptor_id}")

    def for_fk_table(self, fk_table: str) -> List[ParachuteDescriptor]:
        return [d for d in self.descriptors if d.fk_table == fk_table]

    def for_pk_table(self, pk_table: str) -> List[ParachuteDescriptor]:
        return [d for d in self.descriptors if d.pk_table == pk_table]

    def dependents_of(self, descriptor_id: int) -> List[ParachuteDescriptor]:
        """Descriptors copying ``descriptor_id`` transitively."""
        return [d for d in self.descriptors if d.transitive_from == descriptor_id]

    def add_pending(self, fk_table: str, pk_table: str, keys: Iterable[Any]) -> None:
        keys = set(keys)
        if keys:
            self.pending.setdefault((fk_table, pk_table), set()).update(keys)

    def pending_keys(self, fk_table: str, pk_table: str) -> Set[Any]:
        return set(self.pending.get((fk_table, pk_table), ()))

    def clear_pending(self, fk_table: str, pk_table: str, keys: Iterable[Any]) -> None:
        current = self.pending.get((fk_table, pk_table))
        if current is None:
            return
        current.difference_update(keys)
        if not current:
            del self.pending[(fk_table, pk_table)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": CATALOG_FORMAT_VERSION,
            "null_bin_convention": NULL_BIN_CONVENTION,
            "descriptors": [d.to_dict() for d in self.descriptors],
            "pending": [
                {"fk_table": fk, "pk_table": pk, "keys": sorted(keys, key=repr)}
                for (fk, pk), keys in sorted(self.pending.items())
            ],
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], schema: Schema) -> 'Catalog':
        if data.get("version") != CATALOG_FORMAT_VERSION:
            raise DescriptorError(f"unsupported catalog version {data.get('version')}")
        catalog = cls(schema)
        for entry in data.get("descriptors", []):
            descriptor = ParachuteDescriptor.from_dict(entry)
            expected_id = descriptor.id
            if catalog.register(descriptor) != expected_id:
                raise DescriptorError(f"catalog ids are not dense at descriptor {expected_id}")
        for entry in data.get("pending", []):
            catalog.add_pending(entry["fk_table"], entry["pk_table"], entry["keys"])
        return catalog

    def save(self, path: Union[str, os.PathLike]) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path: Union[str, os.PathLike], schema: Schema) -> 'Catalog':
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f), schema)


def register_parachute(catalog: Catalog, descriptor: ParachuteDescriptor) -> int:
    return catalog.register(descriptor)
