"""Exact non-dangling row sets for acyclic queries.

A join tree comes from GYO ear removal over the query's attribute classes;
a bottom-up and a top-down semi-join pass then leave in every relation only
the rows that take part in at least one full join result.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Set, Tuple, Union

import numpy as np

from .errors import CyclicQueryError, PlanError
from .planner import Query
from .predicates import conjunction_mask
from .storage import Database

logger = logging.getLogger(__name__)


@dataclass
class JoinTree:
    """Rooted join tree; ``shared[child]`` lists the classes joining a child to its parent."""

    root: str
    parent: Dict[str, Optional[str]]
    shared: Dict[str, Tuple[int, ...]] = field(default_factory=dict)

    def children(self, alias: str) -> List[str]:
        return [a for a, p in self.parent.items() if p == alias]

    def postorder(self) -> List[str]:
        out: List[str] = []

        def visit(alias):
            for child in self.children(alias):
                visit(child)
            out.append(alias)

        visit(self.root)
        return out

    def edges(self) -> List[Tuple[str, str]]:
        return [(child, parent) for child, parent in self.parent.items() if parent is not None]


def join_tree(query: Query) -> JoinTree:
    """Build a join tree by GYO reduction.

    Raises:
        CyclicQueryError: If no join tree exists
        PlanError: If the join graph is disconnected
    """
    if not query.is_connected():
        raise PlanError(f"query {query.name} has a disconnected join graph")
    original = {alias: query.attributes_of(alias) for alias in query.aliases}
    remaining = {alias: set(classes) for alias, classes in original.items()}
    parent: Dict[str, Optional[str]] = {}
    while len(remaining) > 1:
        counts: Dict[int, int] = {}
        for classes in remaining.values():
            for cls in classes:
                counts[cls] = counts.get(cls, 0) + 1
        for classes in remaining.values():
            classes.difference_update({cls for cls in classes if counts[cls] == 1})
        ear = None
        for alias in query.aliases:
            if alias not in remaining:
                continue
            host = next(
                (other for other in query.aliases
                 if other != alias and other in remaining and remaining[alias] <= remaining[other]),
                None,
            )
            if host is not None:
                ear = (alias, host)
                break
        if ear is None:
            raise CyclicQueryError(f"query {query.name} is cyclic over aliases {sorted(remaining)}")
        alias, host = ear
        parent[alias] = host
        del remaining[alias]
    (root,) = remaining
    parent[root] = None
    shared = {
        child: tuple(sorted(original[child] & original[host]))
        for child, host in parent.items() if host is not None
    }
    return JoinTree(root, parent, shared)


@dataclass
class OracleSets:
    """Sorted non-dangling row ids per alias."""

    query_name: str
    rows: Dict[str, List[int]]

    def as_sets(self) -> Dict[str, Set[int]]:
        return {alias: set(rows) for alias, rows in self.rows.items()}

    def to_dict(self) -> Dict[str, Any]:
        return {"query": self.query_name, "rows": {alias: list(rows) for alias, rows in sorted(self.rows.items())}}

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'OracleSets':
        return cls(data["query"], {alias: [int(r) for r in rows] for alias, rows in data["rows"].items()})

    def save(self, path: Union[str, os.PathLike]) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> 'OracleSets':
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class _Reducer:
    def __init__(self, query: Query, database: Database):
        self.query = query
        self.database = database
        classes = query.join_classes()
        self.columns: Dict[str, Dict[int, List[str]]] = {alias: {} for alias in query.aliases}
        for ref, cls in classes.items():
            self.columns[ref.alias].setdefault(cls, []).append(ref.column)
        for per_class in self.columns.values():
            for names in per_class.values():
                names.sort()

    def table(self, alias: str):
        return self.database.table(self.query.table_of(alias))

    def base_rows(self, alias: str) -> np.ndarray:
        table = self.table(alias)
        keep = conjunction_mask(self.query.predicates_of(alias), table.column, table.row_count)
        for names in self.columns[alias].values():
            first = table.column(names[0])
            keep &= ~first.nulls
            for name in names[1:]:
                other = table.column(name)
                keep &= ~other.nulls & (other.values == first.values)
        return np.flatnonzero(keep)

    def keys(self, alias: str, rows: np.ndarray, classes: Iterable[int]) -> List[Tuple[Any, ...]]:
        table = self.table(alias)
        columns = [table.column(self.columns[alias][cls][0]).values[rows].tolist() for cls in classes]
        return list(zip(*columns))

    def semijoin(self, left: str, left_rows: np.ndarray, right: str, right_rows: np.ndarray,
                 classes: Tuple[int, ...]) -> np.ndarray:
        """Rows of ``left`` with a partner among ``right_rows`` on ``classes``."""
        if not classes:
            return left_rows if len(right_rows) else left_rows[:0]
        present = set(self.keys(right, right_rows, classes))
        keep = np.fromiter((k in present for k in self.keys(left, left_rows, classes)), dtype=bool,
                           count=len(left_rows))
        return left_rows[keep]


def semijoin_reduce(query: Query, database: Database, tree: Optional[JoinTree] = None) -> OracleSets:
    """Non-dangling rows per alias after base predicates and a full semi-join reduction.

    Raises:
        CyclicQueryError: If the query has no join tree
    """
    if tree is None:
        tree = join_tree(query)
    reducer = _Reducer(query, database)
    rows = {alias: reducer.base_rows(alias) for alias in query.aliases}
    order = tree.postorder()
    for child in order:
        host = tree.parent[child]
        if host is not None:
            rows[host] = reducer.semijoin(host, rows[host], child, rows[child], tree.shared[child])
    for host in reversed(order):
        for child in tree.children(host):
            rows[child] = reducer.semijoin(child, rows[child], host, rows[host], tree.shared[child])
    logger.debug("oracle for %s: %s", query.name, {a: len(r) for a, r in rows.items()})
    return OracleSets(query.name, {alias: [int(r) for r in rows[alias]] for alias in query.aliases})


@dataclass
class VerificationResult:
    ok: bool
    full_reduction: bool
    missing: Dict[str, List[int]] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok


def verify_no_false_negatives(engine_sets: Mapping[str, Iterable[int]], oracle: OracleSets) -> VerificationResult:
    """Every non-dangling row must have been emitted; equality is a full reduction."""
    missing: Dict[str, List[int]] = {}
    exact = True
    for alias, expected in oracle.rows.items():
        emitted = {int(r) for r in engine_sets.get(alias, ())}
        lost = sorted(set(expected) - emitted)
        if lost:
            missing[alias] = lost
        if emitted != set(expected):
            exact = False
    ok = not missing
    if not ok:
        logger.warning("false negatives in %s: %s", oracle.query_name, {a: len(r) for a, r in missing.items()})
    return VerificationResult(ok, ok and exact, missing)
