"""Synthetic movie-database workload and the experiment drivers.

The schema mirrors a small slice of IMDb: two fact-like FK tables
(``movie_keyword``, ``movie_info_idx``) over three PK tables (``title``,
``keyword``, ``info_type``). FK keys follow a bounded Zipf distribution.
Every generated artifact is a deterministic function of the seed.
"""

import csv
import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .attach import AttachConfig, AttachSpec, ParachuteAttacher
from .catalog import Catalog, DescriptorKind
from .engine import EngineConfig, ExecutionMode, dangling_counts, execute, prepare_query
from .oracle import OracleSets, semijoin_reduce
from .planner import Query, QueryPlan, left_deep_plan
from .schema import LogicalType, Schema
from .storage import ColumnVector, Database, TableData

logger = logging.getLogger(__name__)

TITLE_WORDS = np.array([
    "night", "city", "love", "return", "dark", "star", "king", "river", "last", "secret",
    "house", "blood", "summer", "ghost", "road", "island", "storm", "dream", "fire", "silent",
    "golden", "lost", "shadow", "winter", "empire", "heart", "journey", "mirror", "wild", "garden",
], dtype=object)

KEYWORD_WORDS = np.array([
    "sequel", "character", "name", "in", "title", "based", "on", "novel", "murder", "revenge",
    "friendship", "police", "female", "protagonist", "death", "flashback", "marvel", "comic",
    "superhero", "dog", "war", "family", "hospital", "prison", "train", "music", "dance",
    "escape", "betrayal", "alien",
], dtype=object)

KINDS = np.array(["movie", "tv series", "tv movie", "episode", "video movie", "video game", "short"], dtype=object)
KIND_WEIGHTS = [0.45, 0.15, 0.1, 0.18, 0.05, 0.02, 0.05]

INFO_TYPES = [
    "rating", "votes", "votes distribution", "top 250 rank", "bottom 10 rank", "budget", "gross",
    "runtimes", "genres", "languages", "countries", "color info", "sound mix", "certificates",
    "locations", "release dates", "plot", "taglines", "trivia", "quotes",
]


@dataclass(frozen=True)
class SnowflakeConfig:
    seed: int = 7
    scale: int = 1
    zipf: float = 1.1
    titles: int = 2000
    keywords: int = 1000
    movie_keyword_rows: int = 16000
    movie_info_idx_rows: int = 8000
    null_year_fraction: float = 0.05
    pbw: int = 8
    queries: int = 50

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")


def snowflake_schema() -> Schema:
    return Schema.create_from_json({
        "tables": [
            {"name": "title", "primary_key": "id", "columns": [
                {"name": "id", "type": "int64", "nullable": False},
                {"name": "title", "type": "string", "nullable": False},
                {"name": "production_year", "type": "int64", "nullable": True},
                {"name": "kind", "type": "string", "nullable": False},
            ]},
            {"name": "keyword", "primary_key": "id", "columns": [
                {"name": "id", "type": "int64", "nullable": False},
                {"name": "keyword", "type": "string", "nullable": False},
            ]},
            {"name": "info_type", "primary_key": "id", "columns": [
                {"name": "id", "type": "int64", "nullable": False},
                {"name": "info", "type": "string", "nullable": False},
            ]},
            {"name": "movie_keyword", "primary_key": "id", "columns": [
                {"name": "id", "type": "int64", "nullable": False},
                {"name": "movie_id", "type": "int64", "nullable": False},
                {"name": "keyword_id", "type": "int64", "nullable": False},
            ]},
            {"name": "movie_info_idx", "primary_key": "id", "columns": [
                {"name": "id", "type": "int64", "nullable": False},
                {"name": "movie_id", "type": "int64", "nullable": False},
                {"name": "info_type_id", "type": "int64", "nullable": False},
                {"name": "info", "type": "string", "nullable": False},
            ]},
        ],
        "foreign_keys": [
            {"fk_table": "movie_keyword", "fk_column": "movie_id", "pk_table": "title", "pk_column": "id"},
            {"fk_table": "movie_keyword", "fk_column": "keyword_id", "pk_table": "keyword", "pk_column": "id"},
            {"fk_table": "movie_info_idx", "fk_column": "movie_id", "pk_table": "title", "pk_column": "id"},
            {"fk_table": "movie_info_idx", "fk_column": "info_type_id", "pk_table": "info_type", "pk_column": "id"},
        ],
    })


def snowflake_attach_specs(pbw: int = 8) -> List[AttachSpec]:
    numeric, lowcard, fp = (DescriptorKind.NUMERIC_HISTOGRAM, DescriptorKind.LOWCARD_STRING,
                            DescriptorKind.STRING_FINGERPRINT)
    entries = [
        ("movie_info_idx", "title", "production_year", numeric),
        ("movie_info_idx", "title", "kind", lowcard),
        ("movie_info_idx", "title", "title", fp),
        ("movie_info_idx", "info_type", "info", lowcard),
        ("movie_keyword", "title", "production_year", numeric),
        ("movie_keyword", "title", "kind", lowcard),
        ("movie_keyword", "title", "title", fp),
        ("movie_keyword", "keyword", "keyword", fp),
    ]
    return [AttachSpec(fk, pk, column, kind, pbw) for fk, pk, column, kind in entries]


def zipf_keys(rng: np.random.Generator, keys: np.ndarray, n: int, exponent: float) -> np.ndarray:
    """Draw ``n`` keys with rank-frequency ``1 / rank**exponent`` over a shuffled key order."""
    ranks = np.arange(1, len(keys) + 1, dtype=np.float64)
    probs = ranks ** -exponent
    cdf = np.cumsum(probs / probs.sum())
    order = rng.permutation(keys)
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    return order[np.minimum(idx, len(keys) - 1)]


def _phrases(rng: np.random.Generator, words: np.ndarray, n: int, max_words: int, sep: str) -> List[str]:
    lengths = rng.integers(1, max_words + 1, size=n)
    picks = rng.integers(0, len(words), size=int(lengths.sum()))
    out, pos = [], 0
    for length in lengths:
        out.append(sep.join(words[picks[pos:pos + length]]))
        pos += length
    return out


def _int_column(name: str, values: Sequence[int]) -> ColumnVector:
    return ColumnVector(name, LogicalType.INT64, np.asarray(values, dtype=np.int64))


def _str_column(name: str, values: Sequence[str]) -> ColumnVector:
    return ColumnVector.from_pylist(name, LogicalType.STRING, list(values))


def generate_tables(config: SnowflakeConfig) -> Dict[str, TableData]:
    rng = np.random.default_rng(config.seed)
    title_ids = np.arange(1, config.titles + 1)
    years = rng.integers(1950, 2021, size=config.titles)
    null_years = rng.random(config.titles) < config.null_year_fraction
    years = np.where(null_years, 0, years)
    titles = [phrase.title() for phrase in _phrases(rng, TITLE_WORDS, config.titles, 4, " ")]
    kind_cdf = np.cumsum(KIND_WEIGHTS) / sum(KIND_WEIGHTS)
    kinds = KINDS[np.minimum(np.searchsorted(kind_cdf, rng.random(config.titles), side="right"), len(KINDS) - 1)]
    title = TableData("title", {
        "id": _int_column("id", title_ids),
        "title": _str_column("title", titles),
        "production_year": ColumnVector("production_year", LogicalType.INT64, years, null_years),
        "kind": _str_column("kind", kinds.tolist()),
    })

    keyword_ids = np.arange(1, config.keywords + 1)
    keyword_names = [f"{phrase}-{i}" if i % 3 == 0 else phrase
                     for i, phrase in enumerate(_phrases(rng, KEYWORD_WORDS, config.keywords, 3, "-"))]
    keyword = TableData("keyword", {
        "id": _int_column("id", keyword_ids),
        "keyword": _str_column("keyword", keyword_names),
    })

    info_ids = np.arange(1, len(INFO_TYPES) + 1)
    info_type = TableData("info_type", {
        "id": _int_column("id", info_ids),
        "info": _str_column("info", INFO_TYPES),
    })

    n_mk = config.movie_keyword_rows * config.scale
    movie_keyword = TableData("movie_keyword", {
        "id": _int_column("id", np.arange(1, n_mk + 1)),
        "movie_id": _int_column("movie_id", zipf_keys(rng, title_ids, n_mk, config.zipf)),
        "keyword_id": _int_column("keyword_id", zipf_keys(rng, keyword_ids, n_mk, config.zipf)),
    })

    n_mi = config.movie_info_idx_rows * config.scale
    ratings = [f"{r:.1f}" for r in rng.uniform(1.0, 9.9, size=n_mi)]
    movie_info_idx = TableData("movie_info_idx", {
        "id": _int_column("id", np.arange(1, n_mi + 1)),
        "movie_id": _int_column("movie_id", zipf_keys(rng, title_ids, n_mi, config.zipf)),
        "info_type_id": _int_column("info_type_id", zipf_keys(rng, info_ids, n_mi, config.zipf)),
        "info": _str_column("info", ratings),
    })
    tables = [title, keyword, info_type, movie_keyword, movie_info_idx]
    return {t.name: t for t in tables}


# -- query templates ----------------------------------------------------------

Template = Callable[[np.random.Generator, Database], Tuple[Dict[str, Any], List[str]]]

_FACT_JOINS = {
    "mk_t": {"left": "mk.movie_id", "right": "t.id"},
    "mk_k": {"left": "mk.keyword_id", "right": "k.id"},
    "mi_t": {"left": "mi_idx.movie_id", "right": "t.id"},
    "mi_it": {"left": "mi_idx.info_type_id", "right": "it.id"},
    "mi_mk": {"left": "mi_idx.movie_id", "right": "mk.movie_id"},
}


def _pick(rng: np.random.Generator, database: Database, table: str, column: str, n: int = 1) -> List[str]:
    values = database.table(table).column(column).values
    return [str(v) for v in rng.choice(values, size=n, replace=False)]


def _word(rng: np.random.Generator, words: np.ndarray) -> str:
    return str(words[rng.integers(0, len(words))])


def _year(rng: np.random.Generator) -> int:
    return int(rng.integers(1960, 2016))


def _job4a(rng, database):
    year = _year(rng)
    return {
        "relations": {"it": "info_type", "mi_idx": "movie_info_idx", "t": "title",
                      "mk": "movie_keyword", "k": "keyword"},
        "joins": [_FACT_JOINS[j] for j in ("mi_t", "mk_t", "mi_mk", "mk_k", "mi_it")],
        "predicates": {
            "it": [{"type": "compare", "column": "info", "op": "=", "value": "rating"}],
            "k": [{"type": "like", "column": "keyword", "pattern": f"%{_word(rng, KEYWORD_WORDS)}%"}],
            "mi_idx": [{"type": "compare", "column": "info", "op": ">", "value": f"{rng.uniform(2, 8):.1f}"}],
            "t": [{"type": "compare", "column": "production_year", "op": ">", "value": year}],
        },
        "projection": ["mi_idx.info", "t.title"],
    }, ["it", "mi_idx", "t", "mk", "k"]


def _year_between_keyword_in(rng, database):
    low = _year(rng)
    return {
        "relations": {"t": "title", "mk": "movie_keyword", "k": "keyword"},
        "joins": [_FACT_JOINS["mk_t"], _FACT_JOINS["mk_k"]],
        "predicates": {
            "t": [{"type": "between", "column": "production_year", "low": low, "high": low + 5}],
            "k": [{"type": "in", "column": "keyword", "values": _pick(rng, database, "keyword", "keyword", 40)}],
        },
        "projection": ["t.title", "k.keyword"],
    }, ["k", "mk", "t"]


def _kind_in_keyword_like(rng, database):
    return {
        "relations": {"t": "title", "mk": "movie_keyword", "k": "keyword"},
        "joins": [_FACT_JOINS["mk_t"], _FACT_JOINS["mk_k"]],
        "predicates": {
            "t": [{"type": "in", "column": "kind", "values": ["tv series", "tv movie"]}],
            "k": [{"type": "like", "column": "keyword", "pattern": f"{_word(rng, KEYWORD_WORDS)}%"}],
        },
        "projection": ["t.kind", "k.keyword"],
    }, ["k", "mk", "t"]


def _title_like_info(rng, database):
    return {
        "relations": {"it": "info_type", "mi_idx": "movie_info_idx", "t": "title"},
        "joins": [_FACT_JOINS["mi_t"], _FACT_JOINS["mi_it"]],
        "predicates": {
            "t": [{"type": "like", "column": "title", "pattern": f"%{_word(rng, TITLE_WORDS).title()}%"}],
            "it": [{"type": "compare", "column": "info", "op": "=", "value": str(rng.choice(INFO_TYPES[:6]))}],
        },
        "projection": ["t.title", "mi_idx.info"],
    }, ["it", "mi_idx", "t"]


def _year_lt(rng, database):
    return {
        "relations": {"mk": "movie_keyword", "t": "title"},
        "joins": [_FACT_JOINS["mk_t"]],
        "predicates": {"t": [{"type": "compare", "column": "production_year", "op": "<", "value": _year(rng)}]},
        "projection": ["mk.id", "t.production_year"],
    }, ["mk", "t"]


def _kind_eq_year_between(rng, database):
    low = _year(rng)
    return {
        "relations": {"it": "info_type", "mi_idx": "movie_info_idx", "t": "title"},
        "joins": [_FACT_JOINS["mi_t"], _FACT_JOINS["mi_it"]],
        "predicates": {
            "t": [
                {"type": "compare", "column": "kind", "op": "=", "value": "movie"},
                {"type": "between", "column": "production_year", "low": low, "high": low + 10},
            ],
            "it": [{"type": "in", "column": "info", "values": ["rating", "votes"]}],
        },
        "projection": ["t.title", "it.info", "mi_idx.info"],
    }, ["it", "mi_idx", "t"]


def _keyword_prefix(rng, database):
    return {
        "relations": {"mk": "movie_keyword", "k": "keyword"},
        "joins": [_FACT_JOINS["mk_k"]],
        "predicates": {"k": [{"type": "like", "column": "keyword", "pattern": f"%{_word(rng, KEYWORD_WORDS)}-%"}]},
        "projection": ["mk.movie_id", "k.keyword"],
    }, ["mk", "k"]


def _keyword_in_year_ge(rng, database):
    return {
        "relations": {"t": "title", "mk": "movie_keyword", "k": "keyword"},
        "joins": [_FACT_JOINS["mk_t"], _FACT_JOINS["mk_k"]],
        "predicates": {
            "k": [{"type": "in", "column": "keyword", "values": _pick(rng, database, "keyword", "keyword", 60)}],
            "t": [{"type": "compare", "column": "production_year", "op": ">=", "value": _year(rng)}],
        },
        "projection": ["t.production_year", "k.keyword"],
    }, ["mk", "t", "k"]


def _info_in_title_ilike(rng, database):
    return {
        "relations": {"mi_idx": "movie_info_idx", "it": "info_type", "t": "title"},
        "joins": [_FACT_JOINS["mi_t"], _FACT_JOINS["mi_it"]],
        "predicates": {
            "it": [{"type": "in", "column": "info", "values": [str(v) for v in rng.choice(INFO_TYPES, 4, replace=False)]}],
            "t": [{"type": "ilike", "column": "title", "pattern": f"%{_word(rng, TITLE_WORDS).upper()}%"}],
        },
        "projection": ["t.title"],
    }, ["mi_idx", "it", "t"]


def _year_or_keyword(rng, database):
    return {
        "relations": {"t": "title", "mk": "movie_keyword", "k": "keyword"},
        "joins": [_FACT_JOINS["mk_t"], _FACT_JOINS["mk_k"]],
        "predicates": {
            "t": [{"type": "or", "column": "production_year", "arms": [
                {"type": "compare", "op": "<", "value": 1960},
                {"type": "compare", "op": ">", "value": 2015},
            ]}],
            "k": [{"type": "like", "column": "keyword", "pattern": f"%{_word(rng, KEYWORD_WORDS)}%"}],
        },
        "projection": ["t.title", "t.production_year"],
    }, ["k", "mk", "t"]


def _kind_regex(rng, database):
    return {
        "relations": {"mi_idx": "movie_info_idx", "t": "title"},
        "joins": [_FACT_JOINS["mi_t"]],
        "predicates": {
            "t": [{"type": "regex", "column": "kind", "pattern": "tv (series|movie)"}],
            "mi_idx": [{"type": "compare", "column": "info", "op": ">=", "value": f"{rng.uniform(5, 9):.1f}"}],
        },
        "projection": ["t.kind", "mi_idx.info"],
    }, ["mi_idx", "t"]


def _year_null(rng, database):
    return {
        "relations": {"mk": "movie_keyword", "t": "title"},
        "joins": [_FACT_JOINS["mk_t"]],
        "predicates": {"t": [{"type": "is_null", "column": "production_year"}]},
        "projection": ["mk.id"],
    }, ["mk", "t"]


TEMPLATES: Dict[str, Template] = {
    "job4a": _job4a,
    "year_between_keyword_in": _year_between_keyword_in,
    "kind_in_keyword_like": _kind_in_keyword_like,
    "title_like_info": _title_like_info,
    "year_lt": _year_lt,
    "kind_eq_year_between": _kind_eq_year_between,
    "keyword_prefix": _keyword_prefix,
    "keyword_in_year_ge": _keyword_in_year_ge,
    "info_in_title_ilike": _info_in_title_ilike,
    "year_or_keyword": _year_or_keyword,
    "kind_regex": _kind_regex,
    "year_null": _year_null,
}


@dataclass
class WorkloadQuery:
    name: str
    query: Query
    plan: QueryPlan


def generate_queries(config: SnowflakeConfig, database: Database, count: Optional[int] = None) -> List[WorkloadQuery]:
    """Instantiate the templates round-robin with per-query seeded parameters."""
    count = config.queries if count is None else count
    names = list(TEMPLATES)
    out = []
    for i in range(count):
        template = names[i % len(names)]
        rng = np.random.default_rng([config.seed, i])
        document, order = TEMPLATES[template](rng, database)
        document["name"] = f"q{i:03d}_{template}"
        out.append(WorkloadQuery(document["name"], Query.create_from_json(document), left_deep_plan(order)))
    return out


@dataclass
class SnowflakeWorkload:
    config: SnowflakeConfig
    database: Database
    specs: List[AttachSpec]
    queries: List[WorkloadQuery] = field(default_factory=list)

    @property
    def schema(self) -> Schema:
        return self.database.schema

    def write(self, out_dir: Union[str, os.PathLike]) -> Path:
        """Write ``data/*.csv``, ``schema.json``, ``attach.json`` and ``queries/``."""
        root = Path(out_dir)
        (root / "data").mkdir(parents=True, exist_ok=True)
        (root / "queries").mkdir(parents=True, exist_ok=True)
        for name, table in self.database.tables.items():
            write_csv(table, root / "data" / f"{name}.csv")
        _dump(root / "schema.json", self.schema.to_dict())
        _dump(root / "attach.json", [spec.to_dict() for spec in self.specs])
        for wq in self.queries:
            _dump(root / "queries" / f"{wq.name}.query.json", wq.query.to_dict())
            _dump(root / "queries" / f"{wq.name}.plan.json", wq.plan.to_dict())
        return root


def _dump(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(table: TableData, path: Union[str, os.PathLike]) -> None:
    """Write the regular columns of ``table``; NULL is the empty field."""
    names = list(table.columns)
    columns = [table.columns[name].to_pylist() for name in names]
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*columns):
            writer.writerow(["" if v is None else v for v in row])


def generate_snowflake(config: SnowflakeConfig = SnowflakeConfig(),
                       out_dir: Optional[Union[str, os.PathLike]] = None) -> SnowflakeWorkload:
    """Generate the workload; with ``out_dir`` it is also written to disk."""
    schema = snowflake_schema()
    database = Database(schema, generate_tables(config))
    workload = SnowflakeWorkload(config, database, snowflake_attach_specs(config.pbw))
    workload.queries = generate_queries(config, database)
    if out_dir is not None:
        workload.write(out_dir)
    logger.info("generated snowflake workload: seed %d, scale %d, %d queries",
                config.seed, config.scale, len(workload.queries))
    return workload


# -- experiments --------------------------------------------------------------

@dataclass
class SweepRow:
    pbw: int
    mode: str
    dangling_fraction: float
    exec_seconds: float
    extra_space_bytes: int

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def attach_workload(workload: SnowflakeWorkload, pbw: int,
                    attach_config: AttachConfig = AttachConfig()) -> Tuple[Database, Catalog]:
    """Fresh copy of the workload database with every spec attached at ``pbw``."""
    database = workload.database.copy()
    catalog = Catalog(database.schema)
    ParachuteAttacher(database, catalog, attach_config).attach_all(
        [dataclasses.replace(spec, pbw=pbw) for spec in workload.specs]
    )
    return database, catalog


def parachute_payload_bytes(database: Database, catalog: Catalog) -> int:
    return sum(
        database.table(d.fk_table).packed_column(d.column_name).payload_bytes for d in catalog.descriptors
    )


def sweep(workload: SnowflakeWorkload, pbws: Sequence[int], modes: Sequence[ExecutionMode],
          engine_config: EngineConfig = EngineConfig(),
          attach_config: AttachConfig = AttachConfig()) -> List[SweepRow]:
    """Dangling fraction, time and extra space per (pbw, mode) over the workload queries."""
    oracles: Dict[str, OracleSets] = {
        wq.name: semijoin_reduce(wq.query, workload.database) for wq in workload.queries
    }
    rows = []
    for pbw in pbws:
        database, catalog = attach_workload(workload, pbw, attach_config)
        payload = parachute_payload_bytes(database, catalog)
        for mode in modes:
            emitted = total = 0
            seconds = 0.0
            for wq in workload.queries:
                query, _, _ = prepare_query(wq.query, wq.plan, database, catalog, mode)
                started = time.perf_counter()
                _, metrics = execute(database, wq.plan, query, mode, engine_config, catalog)
                seconds += time.perf_counter() - started
                e, t = dangling_counts(metrics, oracles[wq.name])
                emitted += e
                total += t
            row = SweepRow(
                pbw=pbw,
                mode=mode.value,
                dangling_fraction=emitted / total if total else 0.0,
                exec_seconds=seconds,
                extra_space_bytes=payload if mode.uses_parachutes else 0,
            )
            logger.info("sweep pbw=%d mode=%s dangling=%.4f", pbw, mode.value, row.dangling_fraction)
            rows.append(row)
    return rows


def write_report(rows: Sequence[Any], json_path: Optional[Union[str, os.PathLike]] = None,
                 csv_path: Optional[Union[str, os.PathLike]] = None) -> None:
    records = [row.to_dict() for row in rows]
    if json_path is not None:
        Path(json_path).write_text(json.dumps(records, indent=2) + "\n", encoding="utf-8")
    if csv_path is not None and records:
        with open(csv_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(records[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(records)


@dataclass
class InsertRow:
    fraction: float
    kind: str
    rows: int
    lookups: int
    lookup_seconds: float
    write_seconds: float

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


INSERT_KINDS = {
    "numeric": AttachSpec("movie_keyword", "title", "production_year", DescriptorKind.NUMERIC_HISTOGRAM, 8),
    "string": AttachSpec("movie_keyword", "title", "title", DescriptorKind.STRING_FINGERPRINT, 8),
}


def insert_batch(table: TableData, fraction: float, seed: int) -> TableData:
    """Copies of ``round(fraction * rows)`` random rows of ``table`` under fresh ids."""
    n = int(round(fraction * table.row_count))
    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(table.row_count, size=n, replace=False)) if n else np.zeros(0, dtype=np.int64)
    columns = {name: column.take(picked) for name, column in table.columns.items()}
    next_id = int(table.column("id").values.max()) + 1 if table.row_count else 1
    columns["id"] = _int_column("id", np.arange(next_id, next_id + n))
    return TableData(table.name, columns)


def insert_bench(workload: SnowflakeWorkload, fractions: Sequence[float], pbw: int = 8,
                 attach_config: AttachConfig = AttachConfig()) -> List[InsertRow]:
    """Join-lookup and column-write time of insert batches, numeric vs. fingerprint descriptor."""
    rows = []
    for fraction in fractions:
        for kind, spec in INSERT_KINDS.items():
            database = workload.database.copy()
            catalog = Catalog(database.schema)
            attacher = ParachuteAttacher(database, catalog, attach_config)
            attacher.attach_all([dataclasses.replace(spec, pbw=pbw)])
            batch = insert_batch(database.table(spec.fk_table), fraction, workload.config.seed)
            stats = attacher.maintain_insert(spec.fk_table, batch)
            rows.append(InsertRow(fraction, kind, stats.rows, stats.lookups, stats.lookup_seconds, stats.write_seconds))
            logger.info("insert fraction=%.4f kind=%s rows=%d %.5fs", fraction, kind, stats.rows, stats.seconds)
    return rows
