"""On-disk database bundles.

A bundle is a directory::

    bundle.json                 manifest (format version, tables, row counts, files)
    schema.json                 the database schema
    catalog.json                parachute descriptors and pending keys
    tables/<table>/<column>.npy     int64 values
    tables/<table>/<column>.json    string values
    tables/<table>/<column>.nulls.npy
    tables/<table>/<column>.packed  packed parachute or helper column
"""

import json
import logging
import os
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .catalog import Catalog
from .errors import IngestError
from .schema import LogicalType, Schema
from .storage import ColumnVector, Database, PackedColumn, TableData

logger = logging.getLogger(__name__)

BUNDLE_FORMAT_VERSION = 1


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def save_bundle(path: Union[str, os.PathLike], database: Database, catalog: Optional[Catalog] = None) -> Path:
    """Write ``database`` and ``catalog`` to the bundle directory ``path``."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    if catalog is None:
        catalog = Catalog(database.schema)
    _write_json(root / "schema.json", database.schema.to_dict())
    catalog.save(root / "catalog.json")
    manifest = {"format_version": BUNDLE_FORMAT_VERSION, "tables": {}}
    for name in sorted(database.tables):
        table = database.tables[name]
        folder = root / "tables" / name
        folder.mkdir(parents=True, exist_ok=True)
        entry = {"rows": table.row_count, "columns": {}, "packed": {}}
        for column_name, column in table.columns.items():
            if column.logical_type is LogicalType.INT64:
                values_file = f"{column_name}.npy"
                np.save(folder / values_file, column.values.astype("<i8"), allow_pickle=False)
            else:
                values_file = f"{column_name}.json"
                _write_json(folder / values_file, [None if null else v for v, null in zip(column.values, column.nulls)])
            nulls_file = f"{column_name}.nulls.npy"
            np.save(folder / nulls_file, column.nulls, allow_pickle=False)
            entry["columns"][column_name] = {
                "type": column.logical_type.value,
                "values": values_file,
                "nulls": nulls_file,
            }
        for column_name, packed in table.packed.items():
            packed_file = f"{column_name}.packed"
            (folder / packed_file).write_bytes(packed.to_bytes())
            entry["packed"][column_name] = {"pbw": packed.pbw, "file": packed_file}
        manifest["tables"][name] = entry
    _write_json(root / "bundle.json", manifest)
    logger.info("bundle written to %s (%d tables)", root, len(database.tables))
    return root


def load_bundle(path: Union[str, os.PathLike]) -> Tuple[Database, Catalog]:
    """Read a bundle written by :func:`save_bundle`.

    Raises:
        IngestError: If the manifest is missing or names an unknown format version
    """
    root = Path(path)
    manifest_path = root / "bundle.json"
    if not manifest_path.is_file():
        raise IngestError(f"{root} is not a bundle: bundle.json missing")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise IngestError(f"{root}: unsupported bundle format {manifest.get('format_version')}")
    schema = Schema.create_from_json(str(root / "schema.json"))
    tables = {}
    for name, entry in manifest["tables"].items():
        folder = root / "tables" / name
        columns = {}
        for column_name, spec in entry["columns"].items():
            logical_type = LogicalType.from_string(spec["type"])
            nulls = np.load(folder / spec["nulls"], allow_pickle=False)
            if logical_type is LogicalType.INT64:
                values = np.load(folder / spec["values"], allow_pickle=False)
            else:
                items = json.loads((folder / spec["values"]).read_text(encoding="utf-8"))
                values = np.empty(len(items), dtype=object)
                values[:] = items
            columns[column_name] = ColumnVector(column_name, logical_type, values, nulls)
        packed = {
            column_name: PackedColumn.from_bytes((folder / spec["file"]).read_bytes())
            for column_name, spec in entry["packed"].items()
        }
        tables[name] = TableData(name, columns, packed)
    database = Database(schema, tables)
    catalog = Catalog.load(root / "catalog.json", schema)
    return database, catalog
