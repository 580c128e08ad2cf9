import csv
import json

import pytest

from parachute.cli import build_parser, main
from parachute.errors import UsageError
from parachute.oracle import OracleSets


@pytest.fixture
def bundle(tmp_path, small_workload):
    workload_dir = small_workload.write(tmp_path / "workload")
    bundle_dir = tmp_path / "bundle"
    assert main(["load", "--schema", str(workload_dir / "schema.json"), "--data", str(workload_dir / "data"),
                 "--out", str(bundle_dir)]) == 0
    assert main(["attach", "--bundle", str(bundle_dir), "--spec", str(workload_dir / "attach.json"),
                 "--pbw", "4"]) == 0
    return workload_dir, bundle_dir


def query_args(workload_dir, name="q000_job4a"):
    return ["--query", str(workload_dir / "queries" / f"{name}.query.json"),
            "--plan", str(workload_dir / "queries" / f"{name}.plan.json")]


def test_load_and_attach_output(tmp_path, small_workload, capsys):
    workload_dir = small_workload.write(tmp_path / "workload")
    assert main(["load", "--schema", str(workload_dir / "schema.json"), "--data", str(workload_dir / "data"),
                 "--out", str(tmp_path / "bundle")]) == 0
    assert "movie_keyword\t2400" in capsys.readouterr().out
    assert main(["attach", "--bundle", str(tmp_path / "bundle"), "--spec", str(workload_dir / "attach.json"),
                 "--pbw", "2"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("table\tcolumn\tseconds\textra_bytes\textra_percent")
    assert "movie_keyword\tparachute_title_production_year" in out


def test_analyze(bundle, capsys):
    workload_dir, bundle_dir = bundle
    capsys.readouterr()
    assert main(["analyze", "--bundle", str(bundle_dir)] + query_args(workload_dir)) == 0
    out = capsys.readouterr().out
    assert "pairs:" in out
    assert main(["analyze", "--bundle", str(bundle_dir), "--flow-mode", "none"] + query_args(workload_dir)) == 0


def test_run_modes_agree(tmp_path, bundle):
    workload_dir, bundle_dir = bundle
    oracle_path = tmp_path / "job4a.oracle.json"
    reports = {}
    for mode in ("off", "both"):
        metrics_path = tmp_path / f"{mode}.metrics.json"
        out_path = tmp_path / f"{mode}.csv"
        assert main(["run", "--bundle", str(bundle_dir), "--mode", mode, "--oracle", str(oracle_path),
                     "--metrics", str(metrics_path), "--out", str(out_path)] + query_args(workload_dir)) == 0
        reports[mode] = json.loads(metrics_path.read_text())
        with open(out_path, newline="") as f:
            header = next(csv.reader(f))
        assert header == ["mi_idx.info", "t.title"]
    assert oracle_path.is_file()
    assert reports["off"]["result_checksum"] == reports["both"]["result_checksum"]
    assert reports["off"]["result_rows"] == reports["both"]["result_rows"]
    assert reports["both"]["dangling_fraction"] <= reports["off"]["dangling_fraction"]
    assert reports["off"]["pairs"] == []
    assert reports["both"]["mode"] == "both"


def test_run_prints_result_without_plan(tmp_path, bundle, capsys):
    workload_dir, bundle_dir = bundle
    capsys.readouterr()
    assert main(["run", "--bundle", str(bundle_dir), "--mode", "psf", "--metrics", str(tmp_path / "m.json"),
                 "--query", str(workload_dir / "queries" / "q000_job4a.query.json")]) == 0
    assert capsys.readouterr().out.startswith("mi_idx.info,t.title")
    assert "dangling_fraction" not in json.loads((tmp_path / "m.json").read_text())


def test_oracle_command(tmp_path, bundle, capsys):
    workload_dir, bundle_dir = bundle
    out = tmp_path / "oracle.json"
    capsys.readouterr()
    assert main(["oracle", "--bundle", str(bundle_dir), "--out", str(out),
                 "--query", str(workload_dir / "queries" / "q001_year_between_keyword_in.query.json")]) == 0
    oracle = OracleSets.load(out)
    assert oracle.query_name == "q001_year_between_keyword_in"
    printed = dict(line.split("\t") for line in capsys.readouterr().out.splitlines())
    assert {alias: int(n) for alias, n in printed.items()} == {a: len(r) for a, r in oracle.rows.items()}


def test_generate(tmp_path, capsys):
    assert main(["--seed", "3", "generate", "--out", str(tmp_path / "wl")]) == 0
    assert (tmp_path / "wl" / "schema.json").is_file()
    assert "title\t2000" in capsys.readouterr().out


def test_insert_bench_command(tmp_path):
    assert main(["insert-bench", "--fractions", "0.001", "--pbw", "4", "--json", str(tmp_path / "i.json")]) == 0
    rows = json.loads((tmp_path / "i.json").read_text())
    assert [r["kind"] for r in rows] == ["numeric", "string"]


def test_errors_return_one(tmp_path, capsys):
    assert main(["run", "--bundle", str(tmp_path / "missing"), "--query", "{}",
                 "--metrics", str(tmp_path / "m.json")]) == 1
    assert "error:" in capsys.readouterr().err
    assert main(["attach", "--bundle", str(tmp_path / "missing"), "--spec", "[]"]) == 1


def test_parser_rejects_unknown_mode(capsys):
    with pytest.raises(UsageError):
        build_parser().parse_args(["run", "--bundle", "b", "--query", "q", "--metrics", "m", "--mode", "fast"])
    assert main(["run", "--bundle", "b", "--query", "q", "--metrics", "m", "--mode", "fast"]) == 1
    assert "invalid choice" in capsys.readouterr().err


def test_usage_errors_return_one(capsys):
    assert main([]) == 1
    assert main(["sweep", "--pbw", "wide"]) == 1
    assert main(["load", "--schema", "s.json"]) == 1
    assert capsys.readouterr().err.count("error:") >= 3
