"""Database schema: tables, columns, PK-FK edges and attribute classes."""

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

from .errors import SchemaError, SchemaLookupError
from .json_schemas import load_document

ClassId = int


class LogicalType(Enum):
    """Logical column types supported by the storage layer."""
    INT64 = "int64"
    STRING = "string"

    @classmethod
    def from_string(cls, value: str) -> 'LogicalType':
        """Create a LogicalType from a string, case-insensitive."""
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"Invalid logical type: {value}. Must be either 'int64' or 'string'")


@dataclass(frozen=True)
class ColumnDef:
    name: str
    type: LogicalType
    nullable: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "type": self.type.value, "nullable": self.nullable}


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: Tuple[ColumnDef, ...]
    primary_key: Optional[str] = None

    def column(self, name: str) -> ColumnDef:
        for column in self.columns:
            if column.name == name:
                return column
        raise SchemaLookupError(f"unknown column {self.name}.{name}")

    def has_column(self, name: str) -> bool:
        return any(column.name == name for column in self.columns)

    @property
    def column_names(self) -> List[str]:
        return [column.name for column in self.columns]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "primary_key": self.primary_key,
            "columns": [column.to_dict() for column in self.columns],
        }


@dataclass(frozen=True)
class ForeignKey:
    fk_table: str
    fk_column: str
    pk_table: str
    pk_column: str

    def to_dict(self) -> Dict[str, str]:
        return {
            "fk_table": self.fk_table,
            "fk_column": self.fk_column,
            "pk_table": self.pk_table,
            "pk_column": self.pk_column,
        }


@dataclass
class Schema:
    """Tables plus explicit PK-FK constraints.

    Attribute equivalence classes are the connected components of the graph
    whose edges are FK column pairs. Declared primary keys without any FK edge
    form singleton classes. Class ids are dense and follow declaration order.
    """

    tables: List[TableDef]
    fks: List[ForeignKey] = field(default_factory=list)
    classes: Dict[Tuple[str, str], ClassId] = field(init=False, repr=False)

    def __post_init__(self):
        self._by_name: Dict[str, TableDef] = {}
        for table in self.tables:
            if table.name in self._by_name:
                raise SchemaError(f"table {table.name} declared twice")
            names = table.column_names
            if len(set(names)) != len(names):
                raise SchemaError(f"table {table.name} declares a column twice")
            if table.primary_key is not None and not table.has_column(table.primary_key):
                raise SchemaError(f"primary key {table.name}.{table.primary_key} is not a column")
            self._by_name[table.name] = table
        for fk in self.fks:
            for table, column in ((fk.fk_table, fk.fk_column), (fk.pk_table, fk.pk_column)):
                if table not in self._by_name:
                    raise SchemaError(f"foreign key references unknown table {table}")
                if not self._by_name[table].has_column(column):
                    raise SchemaError(f"foreign key references unknown column {table}.{column}")
        self.classes = self._compute_classes()

    def _compute_classes(self) -> Dict[Tuple[str, str], ClassId]:
        parent: Dict[Tuple[str, str], Tuple[str, str]] = {}
        order: List[Tuple[str, str]] = []

        def find(node):
            while parent[node] != node:
                parent[node] = parent[parent[node]]
                node = parent[node]
            return node

        def add(node):
            if node not in parent:
                parent[node] = node
                order.append(node)

        for table in self.tables:
            if table.primary_key is not None:
                add((table.name, table.primary_key))
        for fk in self.fks:
            a, b = (fk.fk_table, fk.fk_column), (fk.pk_table, fk.pk_column)
            add(a)
            add(b)
            root_a, root_b = find(a), find(b)
            if root_a != root_b:
                parent[root_b] = root_a

        ids: Dict[Tuple[str, str], ClassId] = {}
        classes: Dict[Tuple[str, str], ClassId] = {}
        for node in order:
            root = find(node)
            if root not in ids:
                ids[root] = len(ids)
            classes[node] = ids[root]
        return classes

    def table(self, name: str) -> TableDef:
        try:
            return self._by_name[name]
        except KeyError:
            raise SchemaLookupError(f"unknown table {name}")

    def has_table(self, name: str) -> bool:
        return name in self._by_name

    @property
    def table_names(self) -> List[str]:
        return [table.name for table in self.tables]

    def foreign_keys_of(self, fk_table: str) -> List[ForeignKey]:
        return [fk for fk in self.fks if fk.fk_table == fk_table]

    def fk_edges(self, fk_table: str, pk_table: str) -> List[ForeignKey]:
        return [fk for fk in self.fks if fk.fk_table == fk_table and fk.pk_table == pk_table]

    def fk_edge(self, fk_table: str, pk_table: str) -> Optional[ForeignKey]:
        """The first FK edge from ``fk_table`` to ``pk_table``, if any."""
        edges = self.fk_edges(fk_table, pk_table)
        return edges[0] if edges else None

    def attribute_class(self, table: str, column: str) -> Optional[ClassId]:
        return attribute_class(self, table, column)

    @staticmethod
    def create_from_json(source: Union[str, dict]) -> 'Schema':
        """Create a Schema from a dict, a JSON file path or a JSON string.

        Raises:
            jsonschema.ValidationError: If the document doesn't conform to the schema
            SchemaError: If a constraint references an unknown table or column
        """
        data = load_document(source, "database")
        tables = [
            TableDef(
                name=table["name"],
                primary_key=table.get("primary_key"),
                columns=tuple(
                    ColumnDef(
                        name=column["name"],
                        type=LogicalType.from_string(column["type"]),
                        nullable=column.get("nullable", True),
                    )
                    for column in table["columns"]
                ),
            )
            for table in data["tables"]
        ]
        fks = [ForeignKey(**fk) for fk in data.get("foreign_keys", [])]
        return Schema(tables=tables, fks=fks)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tables": [table.to_dict() for table in self.tables],
            "foreign_keys": [fk.to_dict() for fk in self.fks],
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def attribute_class(schema: Schema, table: str, column: str) -> Optional[ClassId]:
    """Return the equivalence class of ``table.column``.

    Returns None for columns that are not join keys.

    Raises:
        SchemaLookupError: for an unknown table or column
    """
    schema.table(table).column(column)
    return schema.classes.get((table, column))


def fk_graph(schema: Schema, tables: Optional[Iterable[str]] = None) -> Dict[str, List[str]]:
    """Map each table to the PK tables it references."""
    names = list(tables) if tables is not None else schema.table_names
    graph: Dict[str, List[str]] = {name: [] for name in names}
    for fk in schema.fks:
        if fk.fk_table in graph:
            if fk.pk_table not in graph[fk.fk_table]:
                graph[fk.fk_table].append(fk.pk_table)
    return graph
