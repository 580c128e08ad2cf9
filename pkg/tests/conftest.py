import sys
from pathlib import Path

import pytest

# Add the src directory to the Python path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from parachute.bench import SnowflakeConfig, generate_snowflake  # noqa: E402
from parachute.planner import Query, left_deep_plan  # noqa: E402
from parachute.schema import LogicalType, Schema  # noqa: E402
from parachute.storage import ColumnVector, Database, TableData  # noqa: E402

JOB4A_QUERY = {
    "name": "job4a",
    "relations": {"it": "info_type", "mi_idx": "movie_info_idx", "t": "title", "mk": "movie_keyword", "k": "keyword"},
    "joins": [
        {"left": "mi_idx.movie_id", "right": "t.id"},
        {"left": "mk.movie_id", "right": "t.id"},
        {"left": "mi_idx.movie_id", "right": "mk.movie_id"},
        {"left": "mk.keyword_id", "right": "k.id"},
        {"left": "mi_idx.info_type_id", "right": "it.id"},
    ],
    "predicates": {
        "it": [{"type": "compare", "column": "info", "op": "=", "value": "rating"}],
        "k": [{"type": "like", "column": "keyword", "pattern": "%sequel%"}],
        "mi_idx": [{"type": "compare", "column": "info", "op": ">", "value": "5.0"}],
        "t": [{"type": "between", "column": "production_year", "low": 2005, "high": 2010}],
    },
    "projection": ["mi_idx.info", "t.title"],
}

JOB4A_ORDER = ["it", "mi_idx", "t", "mk", "k"]

RECENT_CASTS_QUERY = {
    "name": "recent_casts",
    "relations": {"ci": "cast_info", "t": "title"},
    "joins": [{"left": "ci.movie_id", "right": "t.id"}],
    "predicates": {"t": [{"type": "compare", "column": "production_year", "op": ">", "value": 2000}]},
    "projection": ["ci.id", "t.title"],
}

CAST_SCHEMA = {
    "tables": [
        {"name": "title", "primary_key": "id", "columns": [
            {"name": "id", "type": "int64", "nullable": False},
            {"name": "title", "type": "string", "nullable": False},
            {"name": "production_year", "type": "int64", "nullable": False},
        ]},
        {"name": "cast_info", "primary_key": "id", "columns": [
            {"name": "id", "type": "int64", "nullable": False},
            {"name": "movie_id", "type": "int64", "nullable": False},
        ]},
    ],
    "foreign_keys": [
        {"fk_table": "cast_info", "fk_column": "movie_id", "pk_table": "title", "pk_column": "id"},
    ],
}


def int_column(name, values):
    return ColumnVector.from_pylist(name, LogicalType.INT64, list(values))


def str_column(name, values):
    return ColumnVector.from_pylist(name, LogicalType.STRING, list(values))


@pytest.fixture
def cast_database():
    """Titles 123/456/888 (years 1995/2015/3000) and five cast_info rows."""
    schema = Schema.create_from_json(CAST_SCHEMA)
    title = TableData("title", {
        "id": int_column("id", [123, 456, 888]),
        "title": str_column("title", ["Nutella Nights", "Utn", "Tone"]),
        "production_year": int_column("production_year", [1995, 2015, 3000]),
    })
    cast_info = TableData("cast_info", {
        "id": int_column("id", [1, 2, 3, 4, 5]),
        "movie_id": int_column("movie_id", [456, 123, 888, 456, 123]),
    })
    return Database(schema, {"title": title, "cast_info": cast_info})


@pytest.fixture
def job4a_query():
    return Query.create_from_json(JOB4A_QUERY)


@pytest.fixture
def job4a_plan():
    return left_deep_plan(JOB4A_ORDER)


@pytest.fixture(scope="session")
def small_config():
    return SnowflakeConfig(seed=11, titles=300, keywords=120, movie_keyword_rows=2400,
                           movie_info_idx_rows=1200, queries=12)


@pytest.fixture(scope="session")
def small_workload(small_config):
    return generate_snowflake(small_config)


@pytest.fixture(scope="session")
def workload():
    return generate_snowflake(SnowflakeConfig(seed=7, scale=1))
