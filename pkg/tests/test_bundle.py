import json

import pytest

from parachute.attach import AttachConfig, AttachSpec, ParachuteAttacher
from parachute.bundle import BUNDLE_FORMAT_VERSION, load_bundle, save_bundle
from parachute.catalog import Catalog, DescriptorKind
from parachute.errors import IngestError
from parachute.storage import TableData

from conftest import int_column, str_column


@pytest.fixture
def relaxed_cast_database(cast_database):
    cast_database.table("cast_info").append_columns(TableData("cast_info", {
        "id": int_column("id", [6]),
        "movie_id": int_column("movie_id", [999]),
    }))
    catalog = Catalog(cast_database.schema)
    ParachuteAttacher(cast_database, catalog, AttachConfig(relaxed=True)).attach_all([
        AttachSpec("cast_info", "title", "production_year", DescriptorKind.NUMERIC_HISTOGRAM, 2),
        AttachSpec("cast_info", "title", "title", DescriptorKind.STRING_FINGERPRINT, 8),
    ])
    return cast_database, catalog


def test_bundle_roundtrip(tmp_path, relaxed_cast_database):
    database, catalog = relaxed_cast_database
    root = save_bundle(tmp_path / "bundle", database, catalog)
    assert json.loads((root / "bundle.json").read_text())["format_version"] == BUNDLE_FORMAT_VERSION

    loaded, loaded_catalog = load_bundle(root)
    assert loaded.schema.to_dict() == database.schema.to_dict()
    for name, table in database.tables.items():
        other = loaded.table(name)
        assert other.row_count == table.row_count
        for column_name, column in table.columns.items():
            assert other.column(column_name).logical_type is column.logical_type
            assert other.column(column_name).to_pylist() == column.to_pylist()
        assert set(other.packed) == set(table.packed)
        for column_name, packed in table.packed.items():
            assert other.packed_column(column_name).pbw == packed.pbw
            assert other.packed_column(column_name).unpack().tolist() == packed.unpack().tolist()
    assert json.loads(loaded_catalog.to_json()) == json.loads(catalog.to_json())
    assert loaded_catalog.pending_keys("cast_info", "title") == {999}


def test_loaded_bundle_accepts_maintenance(tmp_path, relaxed_cast_database):
    database, catalog = relaxed_cast_database
    loaded, loaded_catalog = load_bundle(save_bundle(tmp_path / "bundle", database, catalog))
    attacher = ParachuteAttacher(loaded, loaded_catalog, AttachConfig(relaxed=True))
    patched = attacher.insert_pk("title", TableData("title", {
        "id": int_column("id", [999]),
        "title": str_column("title", ["Late Arrival"]),
        "production_year": int_column("production_year", [2015]),
    }))
    assert patched >= 1
    assert loaded_catalog.pending_keys("cast_info", "title") == set()


def test_bundle_without_catalog(tmp_path, cast_database):
    loaded, catalog = load_bundle(save_bundle(tmp_path / "plain", cast_database))
    assert catalog.descriptors == []
    assert loaded.table("title").column("title").to_pylist() == ["Nutella Nights", "Utn", "Tone"]


def test_missing_manifest(tmp_path):
    with pytest.raises(IngestError, match="bundle.json"):
        load_bundle(tmp_path)


def test_unknown_format_version(tmp_path, cast_database):
    root = save_bundle(tmp_path / "bundle", cast_database)
    manifest = json.loads((root / "bundle.json").read_text())
    manifest["format_version"] = BUNDLE_FORMAT_VERSION + 1
    (root / "bundle.json").write_text(json.dumps(manifest))
    with pytest.raises(IngestError, match="unsupported bundle format"):
        load_bundle(root)
