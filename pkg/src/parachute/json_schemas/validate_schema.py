#!/usr/bin/env python3
"""
validate_schema.py - Load and validate parachute's JSON documents

Every JSON surface (database schema, query, plan, attach spec) has a draft-07
schema in this directory. Loaders call ``load_document`` so a bad file fails
early with the offending path in the message. Run as a script to validate the
documents written by ``examples_json_maker.py``.
"""

import json
import os
import sys
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Union

from jsonschema import ValidationError, validate

SCHEMA_DIR = Path(__file__).parent

SCHEMA_FILES = {
    "database": "database.schema.json",
    "query": "query.schema.json",
    "plan": "plan.schema.json",
    "attach_spec": "attach_spec.schema.json",
}


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    """Load and cache one of the bundled JSON schemas."""
    try:
        filename = SCHEMA_FILES[name]
    except KeyError:
        raise ValueError(f"Unknown schema: {name}. Must be one of {', '.join(SCHEMA_FILES)}")
    with open(SCHEMA_DIR / filename, "r", encoding="utf-8") as f:
        return json.load(f)


def validate_document(data: Any, name: str) -> None:
    """Validate ``data`` against the named schema.

    Raises:
        ValidationError: with the failing path spelled out in the message
    """
    try:
        validate(instance=data, schema=load_schema(name))
    except ValidationError as e:
        raise ValidationError(
            f"JSON validation failed: {e.message} at path: {' -> '.join(str(p) for p in e.path)}"
        )


def read_json(source: Union[str, os.PathLike, dict, list]) -> Any:
    """Read JSON from a dict/list, a file path or a JSON string."""
    if isinstance(source, (dict, list)):
        return source
    if isinstance(source, os.PathLike):
        source = os.fspath(source)
        if not os.path.isfile(source):
            raise FileNotFoundError(f"No such JSON file: {source}")
    if isinstance(source, str):
        if os.path.isfile(source):
            with open(source, "r", encoding="utf-8") as f:
                return json.load(f)
        try:
            return json.loads(source)
        except json.JSONDecodeError:
            if not source.lstrip().startswith(("{", "[")):
                raise FileNotFoundError(f"No such JSON file: {source}")
            raise ValueError("Invalid JSON string provided")
    raise TypeError("Source must be a file path, JSON string, or dictionary")


def load_document(source: Union[str, os.PathLike, dict, list], name: str) -> Any:
    """Read a JSON document and validate it against the named schema."""
    data = read_json(source)
    validate_document(data, name)
    return data


def main(example_dir: Union[str, os.PathLike, None] = None) -> int:
    """Validate the example documents in example_output/ against their schemas."""
    example_dir = Path(example_dir) if example_dir is not None else SCHEMA_DIR.parent.parent.parent / "example_output"
    examples = {
        "job4a_schema.json": "database",
        "job4a_query.json": "query",
        "job4a_plan.json": "plan",
        "job4a_attach.json": "attach_spec",
    }
    failures = 0
    for filename, schema_name in examples.items():
        path = example_dir / filename
        try:
            load_document(path, schema_name)
            print(f"ok   {filename}")
        except FileNotFoundError:
            print(f"miss {filename} - run examples_json_maker.py first")
            failures += 1
        except (ValidationError, ValueError) as e:
            print(f"fail {filename} - {e}")
            failures += 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
