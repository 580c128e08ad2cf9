import json

from src.parachute.attach import load_attach_specs
from src.parachute.bench import snowflake_schema
from src.parachute.planner import FlowAnalyzer, Query, left_deep_plan

job4a_query_json = {
    "name": "job4a",
    "relations": {
        "it": "info_type",
        "mi_idx": "movie_info_idx",
        "t": "title",
        "mk": "movie_keyword",
        "k": "keyword"
    },
    "joins": [
        {"left": "mi_idx.movie_id", "right": "t.id"},
        {"left": "mk.movie_id", "right": "t.id"},
        {"left": "mi_idx.movie_id", "right": "mk.movie_id"},
        {"left": "mk.keyword_id", "right": "k.id"},
        {"left": "mi_idx.info_type_id", "right": "it.id"}
    ],
    "predicates": {
        "it": [{"type": "compare", "column": "info", "op": "=", "value": "rating"}],
        "k": [{"type": "like", "column": "keyword", "pattern": "%sequel%"}],
        "mi_idx": [{"type": "compare", "column": "info", "op": ">", "value": "5.0"}],
        "t": [{"type": "compare", "column": "production_year", "op": ">", "value": 2005}]
    },
    "projection": ["mi_idx.info", "t.title"]
}

job4a_attach_json = [
    {"fk_table": "movie_info_idx", "pk_table": "title", "source_column": "production_year",
     "kind": "numeric-histogram", "pbw": 8},
    {"fk_table": "movie_keyword", "pk_table": "keyword", "source_column": "keyword",
     "kind": "string-fingerprint", "pbw": 8}
]

query = Query.create_from_json(job4a_query_json)
plan = left_deep_plan(["it", "mi_idx", "t", "mk", "k"])
plan.validate(query)
load_attach_specs(job4a_attach_json)

print("JOB-4a transitive flow matrix:")
print(FlowAnalyzer(query, plan).render())

documents = {
    "example_output/job4a_schema.json": snowflake_schema().to_dict(),
    "example_output/job4a_query.json": query.to_dict(),
    "example_output/job4a_plan.json": plan.to_dict(),
    "example_output/job4a_attach.json": job4a_attach_json,
}
for path, document in documents.items():
    with open(path, "w") as f:
        f.write(json.dumps(document, indent=2) + "\n")
