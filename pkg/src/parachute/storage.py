"""In-memory columnar tables.

Regular columns are numpy arrays with a NULL bitmap. Parachute and helper
columns are bit-packed at exactly ``pbw`` bits per row into little-endian
64-bit words.
"""

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from .errors import DuplicateKeyError, IngestError, SchemaLookupError
from .schema import LogicalType, Schema, TableDef

logger = logging.getLogger(__name__)

WORD_BITS = 64
WORD_DTYPE = np.dtype("<u8")
MAX_PACKED_BITS = 64
# pbw and row count, one little-endian u64 each
PACKED_METADATA_BYTES = 16


class ColumnVector:
    """A typed column with a NULL bitmap (True marks NULL)."""

    def __init__(self, name: str, logical_type: LogicalType, values: np.ndarray,
                 nulls: Optional[np.ndarray] = None):
        if logical_type is LogicalType.INT64:
            values = np.asarray(values, dtype=np.int64)
        else:
            values = np.asarray(values, dtype=object)
        if nulls is None:
            nulls = np.zeros(len(values), dtype=bool)
        nulls = np.asarray(nulls, dtype=bool)
        if len(nulls) != len(values):
            raise ValueError(f"column {name}: null bitmap length {len(nulls)} != {len(values)}")
        self.name = name
        self.logical_type = logical_type
        self.values = values
        self.nulls = nulls

    @classmethod
    def from_pylist(cls, name: str, logical_type: LogicalType, items: Sequence[Any]) -> 'ColumnVector':
        """Build a column from Python values, ``None`` meaning NULL."""
        nulls = np.array([item is None for item in items], dtype=bool)
        if logical_type is LogicalType.INT64:
            values = np.array([0 if item is None else int(item) for item in items], dtype=np.int64)
        else:
            values = np.empty(len(items), dtype=object)
            for i, item in enumerate(items):
                values[i] = None if item is None else str(item)
        return cls(name, logical_type, values, nulls)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def has_nulls(self) -> bool:
        return bool(self.nulls.any())

    def get(self, row: int) -> Any:
        if self.nulls[row]:
            return None
        value = self.values[row]
        return int(value) if self.logical_type is LogicalType.INT64 else value

    def to_pylist(self) -> List[Any]:
        if self.logical_type is LogicalType.INT64:
            return [None if null else int(v) for v, null in zip(self.values.tolist(), self.nulls)]
        return [None if null else v for v, null in zip(self.values, self.nulls)]

    def take(self, rows: np.ndarray) -> 'ColumnVector':
        return ColumnVector(self.name, self.logical_type, self.values[rows], self.nulls[rows])

    def concat(self, other: 'ColumnVector') -> 'ColumnVector':
        return ColumnVector(
            self.name,
            self.logical_type,
            np.concatenate([self.values, other.values]),
            np.concatenate([self.nulls, other.nulls]),
        )

    def set(self, row: int, value: Any) -> None:
        if value is None:
            self.nulls[row] = True
            self.values[row] = 0 if self.logical_type is LogicalType.INT64 else None
        else:
            self.nulls[row] = False
            self.values[row] = int(value) if self.logical_type is LogicalType.INT64 else str(value)

    def copy(self) -> 'ColumnVector':
        return ColumnVector(self.name, self.logical_type, self.values.copy(), self.nulls.copy())


class PackedColumn:
    """Non-nullable unsigned column packed at ``pbw`` bits per row."""

    def __init__(self, pbw: int, row_count: int, words: Optional[np.ndarray] = None):
        if not 1 <= pbw <= MAX_PACKED_BITS:
            raise ValueError(f"packed width must be in [1, {MAX_PACKED_BITS}], got {pbw}")
        n_words = math.ceil(row_count * pbw / WORD_BITS)
        if words is None:
            words = np.zeros(n_words, dtype=WORD_DTYPE)
        words = np.asarray(words, dtype=WORD_DTYPE)
        if len(words) != n_words:
            raise ValueError(f"expected {n_words} words for {row_count} rows at {pbw} bits, got {len(words)}")
        self.pbw = pbw
        self.row_count = row_count
        self.words = words

    @property
    def mask(self) -> np.uint64:
        return np.uint64((1 << self.pbw) - 1)

    @classmethod
    def pack(cls, values: Iterable[int], pbw: int) -> 'PackedColumn':
        values = np.asarray(values, dtype=np.uint64)
        column = cls(pbw, len(values))
        if len(values):
            if int(values.max()) >= (1 << pbw):
                raise ValueError(f"value {int(values.max())} does not fit in {pbw} bits")
            column._or_in(np.arange(len(values), dtype=np.uint64), values)
        return column

    def _positions(self, rows: np.ndarray):
        bitpos = rows.astype(np.uint64) * np.uint64(self.pbw)
        word = (bitpos >> np.uint64(6)).astype(np.int64)
        offset = bitpos & np.uint64(WORD_BITS - 1)
        spill = offset + np.uint64(self.pbw) > np.uint64(WORD_BITS)
        return word, offset, spill

    def _or_in(self, rows: np.ndarray, values: np.ndarray) -> None:
        word, offset, spill = self._positions(rows)
        np.bitwise_or.at(self.words, word, values << offset)
        if spill.any():
            high = values[spill] >> (np.uint64(WORD_BITS) - offset[spill])
            np.bitwise_or.at(self.words, word[spill] + 1, high)

    def _clear(self, rows: np.ndarray) -> None:
        word, offset, spill = self._positions(rows)
        mask = np.full(len(rows), self.mask, dtype=np.uint64)
        np.bitwise_and.at(self.words, word, ~(mask << offset))
        if spill.any():
            high = mask[spill] >> (np.uint64(WORD_BITS) - offset[spill])
            np.bitwise_and.at(self.words, word[spill] + 1, ~high)

    def unpack(self, rows: Optional[np.ndarray] = None) -> np.ndarray:
        """Read values (all rows, or the given row indices) as uint64."""
        if rows is None:
            rows = np.arange(self.row_count, dtype=np.int64)
        rows = np.asarray(rows, dtype=np.int64)
        if len(rows) == 0:
            return np.zeros(0, dtype=np.uint64)
        word, offset, spill = self._positions(rows)
        values = self.words[word] >> offset
        if spill.any():
            values[spill] |= self.words[word[spill] + 1] << (np.uint64(WORD_BITS) - offset[spill])
        return (values & self.mask).astype(np.uint64)

    def get(self, row: int) -> int:
        return int(self.unpack(np.array([row]))[0])

    def set_values(self, rows: Sequence[int], values: Sequence[int]) -> None:
        """Overwrite the given rows. Row indices must be distinct."""
        rows = np.asarray(rows, dtype=np.int64)
        values = np.asarray(values, dtype=np.uint64)
        if len(rows) == 0:
            return
        if int(values.max()) >= (1 << self.pbw):
            raise ValueError(f"value {int(values.max())} does not fit in {self.pbw} bits")
        self._clear(rows)
        self._or_in(rows, values)

    def append(self, values: Sequence[int]) -> None:
        values = np.asarray(values, dtype=np.uint64)
        if len(values) == 0:
            return
        start = self.row_count
        self.row_count += len(values)
        n_words = math.ceil(self.row_count * self.pbw / WORD_BITS)
        self.words = np.concatenate([self.words, np.zeros(n_words - len(self.words), dtype=WORD_DTYPE)])
        self.set_values(np.arange(start, self.row_count), values)

    @property
    def payload_bytes(self) -> int:
        return math.ceil(self.row_count * self.pbw / 8)

    @property
    def extra_bytes(self) -> int:
        """Space this column adds: packed payload plus constant metadata."""
        return self.payload_bytes + PACKED_METADATA_BYTES

    def to_bytes(self) -> bytes:
        header = np.array([self.pbw, self.row_count], dtype=WORD_DTYPE).tobytes()
        return header + self.words.tobytes()[: self.payload_bytes]

    @classmethod
    def from_bytes(cls, data: bytes) -> 'PackedColumn':
        pbw, row_count = (int(v) for v in np.frombuffer(data[:PACKED_METADATA_BYTES], dtype=WORD_DTYPE))
        payload = data[PACKED_METADATA_BYTES:]
        n_words = math.ceil(row_count * pbw / WORD_BITS)
        padded = payload + b"\x00" * (n_words * 8 - len(payload))
        return cls(pbw, row_count, np.frombuffer(padded, dtype=WORD_DTYPE).copy())

    def copy(self) -> 'PackedColumn':
        return PackedColumn(self.pbw, self.row_count, self.words.copy())


@dataclass
class TableData:
    """A table's columns plus its packed parachute and helper columns."""

    name: str
    columns: Dict[str, ColumnVector]
    packed: Dict[str, PackedColumn] = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(column) for column in self.columns.values()}
        lengths |= {column.row_count for column in self.packed.values()}
        if len(lengths) > 1:
            raise ValueError(f"table {self.name}: columns disagree on row count {sorted(lengths)}")

    @property
    def row_count(self) -> int:
        for column in self.columns.values():
            return len(column)
        for column in self.packed.values():
            return column.row_count
        return 0

    def column(self, name: str) -> ColumnVector:
        try:
            return self.columns[name]
        except KeyError:
            raise SchemaLookupError(f"unknown column {self.name}.{name}")

    def packed_column(self, name: str) -> PackedColumn:
        try:
            return self.packed[name]
        except KeyError:
            raise SchemaLookupError(f"no parachute column {self.name}.{name}")

    def values_of(self, name: str) -> np.ndarray:
        """Raw values of a regular or packed column (packed values as int64)."""
        if name in self.columns:
            return self.columns[name].values
        return self.packed_column(name).unpack().astype(np.int64)

    def take(self, rows: np.ndarray) -> 'TableData':
        return TableData(
            self.name,
            {name: column.take(rows) for name, column in self.columns.items()},
            {name: PackedColumn.pack(column.unpack(rows), column.pbw) for name, column in self.packed.items()},
        )

    def append_columns(self, batch: 'TableData') -> None:
        """Append the regular columns of ``batch``; packed columns are left to the caller."""
        for name in self.columns:
            self.columns[name] = self.columns[name].concat(batch.column(name))

    def copy(self) -> 'TableData':
        return TableData(
            self.name,
            {name: column.copy() for name, column in self.columns.items()},
            {name: column.copy() for name, column in self.packed.items()},
        )

    @property
    def base_bytes(self) -> int:
        """Approximate size of the regular columns: 8 bytes per int, UTF-8 length per string."""
        total = 0
        for column in self.columns.values():
            if column.logical_type is LogicalType.INT64:
                total += 8 * len(column)
            else:
                total += sum(len(v.encode("utf-8")) for v, null in zip(column.values, column.nulls) if not null)
        return total


class Database:
    """A schema plus the loaded tables."""

    def __init__(self, schema: Schema, tables: Optional[Dict[str, TableData]] = None):
        self.schema = schema
        self.tables: Dict[str, TableData] = dict(tables or {})

    def table(self, name: str) -> TableData:
        try:
            return self.tables[name]
        except KeyError:
            raise SchemaLookupError(f"table {name} is not loaded")

    def __contains__(self, name: str) -> bool:
        return name in self.tables

    def copy(self) -> 'Database':
        return Database(self.schema, {name: table.copy() for name, table in self.tables.items()})

    @classmethod
    def load_directory(cls, schema: Schema, data_dir: Union[str, os.PathLike]) -> 'Database':
        """Load ``<data_dir>/<table>.csv`` for every table in the schema."""
        data_dir = Path(data_dir)
        tables = {}
        for table in schema.tables:
            path = data_dir / f"{table.name}.csv"
            if not path.is_file():
                raise IngestError(f"missing CSV for table {table.name}: {path}")
            tables[table.name] = ingest_csv(schema, table.name, path)
        return cls(schema, tables)

    @property
    def base_bytes(self) -> int:
        return sum(table.base_bytes for table in self.tables.values())


def _parse_field(table: TableDef, column_name: str, raw: str, row: int) -> Any:
    column = table.column(column_name)
    if raw == "":
        if not column.nullable:
            raise IngestError(f"{table.name} row {row}: empty value in non-nullable column {column_name}")
        return None
    if column.type is LogicalType.INT64:
        try:
            return int(raw)
        except ValueError:
            raise IngestError(f"{table.name} row {row}: cannot parse {raw!r} as int64 in column {column_name}")
    return raw


def ingest_csv(schema: Schema, table: str, path: Union[str, os.PathLike]) -> TableData:
    """Load a CSV file (comma separated, double-quote quoting, UTF-8).

    Rows are reported by physical line number; the header is row 1.

    Raises:
        IngestError: on a header mismatch, a row arity mismatch, an unparsable
            value or an empty value in a non-nullable column
    """
    table_def = schema.table(table)
    declared = table_def.column_names
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file, expected a header for table {table}")
        if sorted(header) != sorted(declared):
            raise IngestError(
                f"{path}: header {header} does not match columns of {table} {declared}"
            )
        items: Dict[str, List[Any]] = {name: [] for name in declared}
        for row_number, record in enumerate(reader, start=2):
            if len(record) != len(header):
                raise IngestError(
                    f"{table} row {row_number}: expected {len(header)} fields, got {len(record)}"
                )
            for name, raw in zip(header, record):
                items[name].append(_parse_field(table_def, name, raw, row_number))
    columns = {
        column.name: ColumnVector.from_pylist(column.name, column.type, items[column.name])
        for column in table_def.columns
    }
    data = TableData(table, columns)
    logger.debug("ingested %s: %d rows", table, data.row_count)
    return data


def sample_rows(table: TableData, m: int, seed: int) -> List[int]:
    """Uniform sample of ``min(m, row_count)`` distinct row indices, sorted."""
    if m < 1:
        raise ValueError(f"sample size must be >= 1, got {m}")
    n = table.row_count
    if m >= n:
        return list(range(n))
    rng = np.random.default_rng(seed)
    return sorted(int(i) for i in rng.choice(n, size=m, replace=False))


def key_index(table: TableData, key_column: str, relaxed: bool = False) -> Dict[Any, Any]:
    """Map each key to its row index.

    In relaxed mode every key maps to the list of rows holding it.

    Raises:
        DuplicateKeyError: a key occurs twice (strict mode)
        IngestError: the key column holds a NULL
    """
    column = table.column(key_column)
    if column.has_nulls:
        row = int(np.flatnonzero(column.nulls)[0])
        raise IngestError(f"key column {table.name}.{key_column} is NULL at row {row}")
    keys = column.values.tolist()
    if relaxed:
        multi: Dict[Any, List[int]] = {}
        for row, key in enumerate(keys):
            multi.setdefault(key, []).append(row)
        return multi
    index: Dict[Any, int] = {}
    for row, key in enumerate(keys):
        if key in index:
            raise DuplicateKeyError(table.name, key_column, key)
        index[key] = row
    return index
