import math

import numpy as np
import pytest

from parachute.errors import DuplicateKeyError, IngestError, SchemaLookupError
from parachute.schema import LogicalType, Schema
from parachute.storage import (
    PACKED_METADATA_BYTES,
    ColumnVector,
    Database,
    PackedColumn,
    TableData,
    ingest_csv,
    key_index,
    sample_rows,
)

from conftest import CAST_SCHEMA, int_column


@pytest.mark.parametrize("pbw", [1, 2, 3, 7, 8, 13, 31, 64])
def test_packed_read_after_write(pbw):
    rng = np.random.default_rng(pbw)
    high = (1 << pbw) - 1
    values = rng.integers(0, high, size=257, endpoint=True, dtype=np.uint64)
    column = PackedColumn.pack(values, pbw)
    assert np.array_equal(column.unpack(), values)
    rows = np.array([0, 5, 128, 256])
    assert np.array_equal(column.unpack(rows), values[rows])
    assert column.get(5) == int(values[5])


def test_packed_set_values_leaves_neighbours_alone():
    column = PackedColumn.pack([1, 2, 3, 4, 5, 6, 7, 0] * 10, 3)
    column.set_values([9, 10], [7, 7])
    out = column.unpack()
    assert out[8] == 1 and out[11] == 4
    assert out[9] == 7 and out[10] == 7


def test_packed_rejects_too_wide_values():
    column = PackedColumn(2, 4)
    with pytest.raises(ValueError):
        column.set_values([0], [4])
    with pytest.raises(ValueError):
        PackedColumn(65, 1)


def test_packed_append():
    column = PackedColumn.pack([3, 1], 5)
    column.append([31, 0, 17])
    assert column.row_count == 5
    assert column.unpack().tolist() == [3, 1, 31, 0, 17]


@pytest.mark.parametrize("rows,pbw", [(0, 4), (1, 1), (10, 3), (1000, 8), (999, 13)])
def test_extra_space_formula(rows, pbw):
    column = PackedColumn(pbw, rows)
    assert column.payload_bytes == math.ceil(rows * pbw / 8)
    assert column.extra_bytes == math.ceil(rows * pbw / 8) + PACKED_METADATA_BYTES


def test_packed_bytes_roundtrip():
    column = PackedColumn.pack(list(range(100)), 7)
    again = PackedColumn.from_bytes(column.to_bytes())
    assert again.pbw == 7 and again.row_count == 100
    assert again.unpack().tolist() == list(range(100))


def test_column_vector_nulls():
    column = ColumnVector.from_pylist("year", LogicalType.INT64, [1999, None, 2005])
    assert column.has_nulls
    assert column.to_pylist() == [1999, None, 2005]
    assert column.get(1) is None
    column.set(1, 2001)
    assert column.to_pylist() == [1999, 2001, 2005]


def test_table_rejects_ragged_columns():
    with pytest.raises(ValueError):
        TableData("t", {"a": int_column("a", [1, 2]), "b": int_column("b", [1])})


def test_ingest_csv(tmp_path):
    schema = Schema.create_from_json(CAST_SCHEMA)
    path = tmp_path / "title.csv"
    path.write_text('id,title,production_year\n1,"Hello, World",1999\n2,Nutella,2015\n3,Tone,2001\n', encoding="utf-8")
    table = ingest_csv(schema, "title", path)
    assert table.row_count == 3
    assert table.column("title").to_pylist() == ["Hello, World", "Nutella", "Tone"]
    assert table.column("production_year").to_pylist() == [1999, 2015, 2001]


def test_ingest_header_only(tmp_path):
    schema = Schema.create_from_json(CAST_SCHEMA)
    path = tmp_path / "cast_info.csv"
    path.write_text("id,movie_id\n", encoding="utf-8")
    assert ingest_csv(schema, "cast_info", path).row_count == 0


def test_ingest_reports_row_of_bad_int(tmp_path):
    schema = Schema.create_from_json(CAST_SCHEMA)
    path = tmp_path / "cast_info.csv"
    path.write_text("id,movie_id\n1,abc\n", encoding="utf-8")
    with pytest.raises(IngestError, match="row 2"):
        ingest_csv(schema, "cast_info", path)


def test_ingest_rejects_null_in_non_nullable(tmp_path):
    schema = Schema.create_from_json(CAST_SCHEMA)
    path = tmp_path / "cast_info.csv"
    path.write_text("id,movie_id\n1,\n", encoding="utf-8")
    with pytest.raises(IngestError):
        ingest_csv(schema, "cast_info", path)


def test_load_directory_needs_every_table(tmp_path):
    schema = Schema.create_from_json(CAST_SCHEMA)
    (tmp_path / "title.csv").write_text("id,title,production_year\n", encoding="utf-8")
    with pytest.raises(IngestError, match="cast_info"):
        Database.load_directory(schema, tmp_path)


def test_sample_rows():
    table = TableData("t", {"a": int_column("a", range(5))})
    assert sample_rows(table, 10, seed=1) == [0, 1, 2, 3, 4]
    big = TableData("t", {"a": int_column("a", range(100000))})
    first = sample_rows(big, 1000, seed=3)
    assert first == sample_rows(big, 1000, seed=3)
    assert len(set(first)) == 1000
    with pytest.raises(ValueError):
        sample_rows(table, 0, seed=1)


def test_key_index(cast_database):
    index = key_index(cast_database.table("title"), "id")
    assert index == {123: 0, 456: 1, 888: 2}


def test_key_index_duplicates():
    table = TableData("t", {"id": int_column("id", [7, 8, 7])})
    with pytest.raises(DuplicateKeyError):
        key_index(table, "id")
    relaxed = key_index(table, "id", relaxed=True)
    assert sorted(relaxed[7]) == [0, 2]


def test_unknown_table_and_column(cast_database):
    with pytest.raises(SchemaLookupError):
        cast_database.table("nope")
    with pytest.raises(SchemaLookupError):
        cast_database.table("title").column("nope")


def test_database_copy_is_independent(cast_database):
    clone = cast_database.copy()
    clone.table("title").column("production_year").set(0, 1)
    assert cast_database.table("title").column("production_year").get(0) == 1995
