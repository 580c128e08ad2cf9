import csv
import dataclasses
import json

import numpy as np
import pytest

from parachute.attach import load_attach_specs
from parachute.bench import (
    TEMPLATES,
    SnowflakeConfig,
    attach_workload,
    generate_snowflake,
    insert_batch,
    insert_bench,
    parachute_payload_bytes,
    snowflake_schema,
    sweep,
    write_report,
)
from parachute.engine import ExecutionMode
from parachute.planner import Query, QueryPlan
from parachute.storage import Database


def test_generation_is_deterministic(small_config, small_workload):
    again = generate_snowflake(small_config)
    for name, table in small_workload.database.tables.items():
        for column_name, column in table.columns.items():
            assert again.database.table(name).column(column_name).to_pylist() == column.to_pylist()
    assert [wq.query.to_dict() for wq in again.queries] == [wq.query.to_dict() for wq in small_workload.queries]


def test_other_seed_differs(small_config, small_workload):
    other = generate_snowflake(dataclasses.replace(small_config, seed=small_config.seed + 1))
    assert (other.database.table("movie_keyword").column("movie_id").to_pylist()
            != small_workload.database.table("movie_keyword").column("movie_id").to_pylist())


def test_table_shapes(small_workload):
    db = small_workload.database
    assert db.table("title").row_count == 300
    assert db.table("keyword").row_count == 120
    assert db.table("movie_keyword").row_count == 2400
    assert db.table("movie_info_idx").row_count == 1200
    nulls = int(db.table("title").column("production_year").nulls.sum())
    assert 0 < nulls < 60


def test_fk_keys_are_skewed(small_workload):
    movie_ids = small_workload.database.table("movie_keyword").column("movie_id").values
    counts = np.bincount(movie_ids)
    assert counts.max() > 5 * len(movie_ids) / 300
    titles = set(small_workload.database.table("title").column("id").values.tolist())
    assert set(movie_ids.tolist()) <= titles


def test_queries_follow_templates(small_workload):
    names = list(TEMPLATES)
    assert len(small_workload.queries) == 12
    assert [wq.name for wq in small_workload.queries] == [f"q{i:03d}_{t}" for i, t in enumerate(names)]
    assert small_workload.queries[0].name == "q000_job4a"
    for wq in small_workload.queries:
        wq.query.validate(small_workload.schema)
        wq.plan.validate(wq.query)


def test_write_and_reload(tmp_path, small_workload):
    root = small_workload.write(tmp_path / "wl")
    for name in small_workload.database.tables:
        assert (root / "data" / f"{name}.csv").is_file()
    assert len(list((root / "queries").glob("*.query.json"))) == 12
    assert len(list((root / "queries").glob("*.plan.json"))) == 12

    reloaded = Database.load_directory(snowflake_schema(), root / "data")
    for name, table in small_workload.database.tables.items():
        for column_name, column in table.columns.items():
            assert reloaded.table(name).column(column_name).to_pylist() == column.to_pylist(), (name, column_name)

    specs = load_attach_specs(str(root / "attach.json"))
    assert specs == small_workload.specs
    first = small_workload.queries[0]
    query = Query.create_from_json(str(root / "queries" / f"{first.name}.query.json"))
    plan = QueryPlan.create_from_json(str(root / "queries" / f"{first.name}.plan.json"))
    assert query.to_dict() == first.query.to_dict()
    assert plan.aliases == first.plan.aliases


def test_attach_workload_leaves_source_untouched(small_workload):
    database, catalog = attach_workload(small_workload, 2)
    assert len(catalog.descriptors) == len(small_workload.specs)
    assert all(not table.packed for table in small_workload.database.tables.values())
    # four descriptors on each fact table, two bits per row
    assert parachute_payload_bytes(database, catalog) == 4 * 300 + 4 * 600


def test_sweep_rows(small_workload):
    rows = sweep(small_workload, [2], [ExecutionMode.OFF, ExecutionMode.PARACHUTE])
    assert [(r.pbw, r.mode) for r in rows] == [(2, "off"), (2, "parachute")]
    off, parachute = rows
    assert off.extra_space_bytes == 0
    assert parachute.extra_space_bytes == 3600
    assert 0.0 <= parachute.dangling_fraction <= off.dangling_fraction <= 1.0
    assert off.exec_seconds >= 0.0
    assert set(off.to_dict()) == {"pbw", "mode", "dangling_fraction", "exec_seconds", "extra_space_bytes"}


def test_insert_batch(small_workload):
    table = small_workload.database.table("movie_keyword")
    batch = insert_batch(table, 0.01, seed=3)
    assert batch.row_count == 24
    assert batch.column("id").to_pylist() == list(range(2401, 2425))
    assert set(batch.column("movie_id").to_pylist()) <= set(table.column("movie_id").to_pylist())
    assert insert_batch(table, 0.0, seed=3).row_count == 0


def test_insert_bench(small_workload):
    rows = insert_bench(small_workload, [0.01, 0.02], pbw=4)
    assert [(r.fraction, r.kind) for r in rows] == [
        (0.01, "numeric"), (0.01, "string"), (0.02, "numeric"), (0.02, "string"),
    ]
    for row in rows:
        assert row.rows == round(row.fraction * 2400)
        assert row.lookups == row.rows
        assert row.lookup_seconds >= 0.0 and row.write_seconds >= 0.0
    # the source database is copied per measurement
    assert small_workload.database.table("movie_keyword").row_count == 2400


def test_write_report(tmp_path, small_workload):
    rows = sweep(small_workload, [1], [ExecutionMode.OFF])
    write_report(rows, tmp_path / "r.json", tmp_path / "r.csv")
    assert json.loads((tmp_path / "r.json").read_text()) == [rows[0].to_dict()]
    with open(tmp_path / "r.csv", newline="") as f:
        [record] = list(csv.DictReader(f))
    assert record["mode"] == "off"
    assert int(record["pbw"]) == 1


def test_config_validation():
    with pytest.raises(ValueError):
        SnowflakeConfig(scale=0)
