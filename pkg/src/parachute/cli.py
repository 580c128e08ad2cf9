"""Command-line entry point: ``parachute <command> [options]``.

Every command exits 0 on success and 1 on any error.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from jsonschema import ValidationError

from .attach import AttachConfig, ParachuteAttacher, load_attach_specs
from .bench import SnowflakeConfig, generate_snowflake, insert_bench, sweep, write_report
from .bundle import load_bundle, save_bundle
from .catalog import Catalog
from .engine import EngineConfig, ExecutionMode, dangling_report, execute, prepare_query
from .errors import ParachuteError, UsageError
from .log import configure_logging
from .oracle import OracleSets, semijoin_reduce
from .planner import FlowAnalyzer, FlowDirection, FlowMode, Query, QueryPlan, blocked_pairs, greedy_plan
from .schema import Schema
from .storage import Database

logger = logging.getLogger(__name__)


def _plan_for(args, query: Query, database: Database) -> QueryPlan:
    if args.plan:
        return QueryPlan.create_from_json(args.plan)
    return greedy_plan(query, {name: table.row_count for name, table in database.tables.items()})


def cmd_load(args) -> int:
    schema = Schema.create_from_json(args.schema)
    database = Database.load_directory(schema, args.data)
    save_bundle(args.out, database, Catalog(schema))
    for name in schema.table_names:
        print(f"{name}\t{database.table(name).row_count}")
    return 0


def cmd_attach(args) -> int:
    database, catalog = load_bundle(args.bundle)
    specs = load_attach_specs(args.spec, pbw=args.pbw)
    config = AttachConfig(sample_size=args.sample_size, seed=args.seed, relaxed=args.relaxed)
    results = ParachuteAttacher(database, catalog, config).attach_all(specs)
    save_bundle(args.bundle, database, catalog)
    print("table\tcolumn\tseconds\textra_bytes\textra_percent")
    for stats in results:
        for column in stats.descriptors:
            extra = stats.descriptor_bytes[column]
            percent = 100.0 * extra / stats.base_bytes if stats.base_bytes else 0.0
            print(f"{stats.fk_table}\t{column}\t{stats.seconds:.4f}\t{extra}\t+{percent:.2f}%")
    return 0


def cmd_analyze(args) -> int:
    database, catalog = load_bundle(args.bundle)
    query = Query.create_from_json(args.query)
    query.validate(database.schema)
    plan = _plan_for(args, query, database)
    mode = FlowMode.from_string(args.flow_mode)
    analyzer = FlowAnalyzer(query, plan, mode)
    matrix = analyzer.render()
    if matrix:
        print(matrix)
    pairs = blocked_pairs(plan, database.schema, query, catalog, mode,
                          FlowDirection.from_string(args.direction), analyzer)
    print(f"pairs: {len(pairs)}")
    for pair in pairs:
        print(f"{pair.source} -> {pair.target}\t{pair.descriptor.column_name}\t"
              + "; ".join(p.describe() for p in pair.predicates))
    return 0


def _load_oracle(path: str, query: Query, database: Database) -> OracleSets:
    if Path(path).is_file():
        return OracleSets.load(path)
    oracle = semijoin_reduce(query, database)
    oracle.save(path)
    return oracle


def cmd_run(args) -> int:
    database, catalog = load_bundle(args.bundle)
    query = Query.create_from_json(args.query)
    plan = _plan_for(args, query, database)
    mode = ExecutionMode.from_string(args.mode)
    rewritten, pairs, warnings = prepare_query(query, plan, database, catalog, mode,
                                              FlowDirection.from_string(args.direction))
    result, metrics = execute(database, plan, rewritten, mode, EngineConfig(hash_seed=args.seed), catalog)
    if args.oracle:
        dangling_report(metrics, _load_oracle(args.oracle, query, database))
    report = metrics.to_dict()
    report["result_checksum"] = result.checksum()
    report["warnings"] = [w.to_dict() for w in warnings]
    report["pairs"] = [p.to_dict() for p in pairs]
    Path(args.metrics).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow([str(ref) for ref in query.projection])
        writer.writerows(["" if v is None else v for v in row] for row in result.tuples())
    finally:
        if args.out:
            out.close()
    return 0


def cmd_oracle(args) -> int:
    database, _ = load_bundle(args.bundle)
    query = Query.create_from_json(args.query)
    oracle = semijoin_reduce(query, database)
    oracle.save(args.out)
    for alias, rows in oracle.rows.items():
        print(f"{alias}\t{len(rows)}")
    return 0


def _workload_config(args) -> SnowflakeConfig:
    return SnowflakeConfig(seed=args.seed, scale=args.scale)


def cmd_generate(args) -> int:
    workload = generate_snowflake(_workload_config(args), args.out)
    for name, table in workload.database.tables.items():
        print(f"{name}\t{table.row_count}")
    return 0


def cmd_sweep(args) -> int:
    workload = generate_snowflake(_workload_config(args))
    modes = [ExecutionMode.from_string(m) for m in args.modes]
    rows = sweep(workload, args.pbw, modes, EngineConfig(hash_seed=args.seed), AttachConfig(seed=args.seed))
    write_report(rows, args.json, args.csv)
    for row in rows:
        print(f"pbw={row.pbw}\tmode={row.mode}\tdangling={row.dangling_fraction:.4f}\t"
              f"seconds={row.exec_seconds:.3f}\textra_bytes={row.extra_space_bytes}")
    return 0


def cmd_insert_bench(args) -> int:
    workload = generate_snowflake(_workload_config(args))
    rows = insert_bench(workload, args.fractions, args.pbw, AttachConfig(seed=args.seed))
    write_report(rows, args.json, args.csv)
    for row in rows:
        print(f"fraction={row.fraction}\tkind={row.kind}\trows={row.rows}\t"
              f"lookup={row.lookup_seconds:.5f}\twrite={row.write_seconds:.5f}")
    return 0


class ArgumentParser(argparse.ArgumentParser):
    """Raises ``UsageError`` instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(prog="parachute", description="Parachute columns for sideways information passing")
    parser.add_argument("--seed", type=int, default=0, help="seed for sampling, hashing and data generation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("load", help="ingest CSVs into a bundle")
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True, help="directory holding <table>.csv files")
    p.add_argument("--out", required=True, help="bundle directory to write")
    p.set_defaults(func=cmd_load)

    p = sub.add_parser("attach", help="build and attach parachute columns")
    p.add_argument("--bundle", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--pbw", type=int, default=None, help="override the width of every spec entry")
    p.add_argument("--relaxed", action="store_true", help="tolerate duplicate PK keys and dangling FK keys")
    p.add_argument("--sample-size", type=int, default=AttachConfig.sample_size)
    p.set_defaults(func=cmd_attach)

    for name, func, help_text in (("analyze", cmd_analyze, "print the flow matrix and blocked pairs"),
                                  ("run", cmd_run, "execute a query")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--bundle", required=True)
        p.add_argument("--query", required=True)
        p.add_argument("--plan", default=None)
        p.add_argument("--direction", default="down", choices=[d.value for d in FlowDirection])
        p.set_defaults(func=func)
        if name == "analyze":
            p.add_argument("--flow-mode", default="psf", choices=[m.value for m in FlowMode])
        else:
            p.add_argument("--mode", default="both", choices=[m.value for m in ExecutionMode])
            p.add_argument("--oracle", default=None, help="oracle sets file, computed and written when missing")
            p.add_argument("--metrics", required=True)
            p.add_argument("--out", default=None, help="result CSV (default: stdout)")

    p = sub.add_parser("oracle", help="compute non-dangling row sets")
    p.add_argument("--bundle", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("generate", help="write the synthetic workload")
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sweep", help="dangling fraction over widths and modes")
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--pbw", type=int, nargs="+", default=[2, 4, 8, 16])
    p.add_argument("--modes", nargs="+", default=[m.value for m in ExecutionMode],
                   choices=[m.value for m in ExecutionMode])
    p.add_argument("--json", default=None)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("insert-bench", help="time parachute maintenance for insert batches")
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--fractions", type=float, nargs="+", default=[0.001, 0.005, 0.01])
    p.add_argument("--pbw", type=int, default=8)
    p.add_argument("--json", default=None)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_insert_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ParachuteError, ValidationError, ValueError, LookupError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
