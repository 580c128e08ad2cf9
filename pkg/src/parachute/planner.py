"""Queries, binary join plans and the static information-flow analysis.

A plan is a binary tree of hash joins with the build side on the left and the
probe side on the right. A probe pipeline is identified by its probe leaf;
single-table build sides share the probe's pipeline.
"""

import copy
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Set, Tuple, Union

import numpy as np

from .catalog import Catalog, ParachuteDescriptor
from .errors import NotTranslatable, PlanError
from .json_schemas import load_document
from .predicates import BasePredicate, predicate_from_dict
from .schema import Schema
from .translate import AlwaysTrue, ParachutePredicate, translate

logger = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class ColumnRef:
    alias: str
    column: str

    @classmethod
    def parse(cls, text: str) -> 'ColumnRef':
        alias, sep, column = text.partition(".")
        if not sep or not alias or not column:
            raise PlanError(f"expected alias.column, got {text!r}")
        return cls(alias, column)

    def __str__(self) -> str:
        return f"{self.alias}.{self.column}"


@dataclass(frozen=True)
class JoinEdge:
    left: ColumnRef
    right: ColumnRef

    @classmethod
    def parse(cls, left: str, right: str) -> 'JoinEdge':
        return cls(ColumnRef.parse(left), ColumnRef.parse(right))

    @property
    def aliases(self) -> Tuple[str, str]:
        return (self.left.alias, self.right.alias)

    def side(self, alias: str) -> ColumnRef:
        if self.left.alias == alias:
            return self.left
        if self.right.alias == alias:
            return self.right
        raise PlanError(f"edge {self} does not touch {alias}")

    def same_as(self, other: 'JoinEdge') -> bool:
        return {self.left, self.right} == {other.left, other.right}

    def to_dict(self) -> Dict[str, str]:
        return {"left": str(self.left), "right": str(self.right)}

    def __str__(self) -> str:
        return f"{self.left} = {self.right}"


class FlowMode(Enum):
    """Which operators may push a filter to which scans."""
    PSF = "psf"
    LIP = "lip"
    PSF_ALL_SIDES = "psf_all_sides"
    NONE = "none"

    @classmethod
    def from_string(cls, value: str) -> 'FlowMode':
        try:
            return cls(value.lower().replace("-", "_"))
        except ValueError:
            raise ValueError(f"Invalid flow mode: {value}. Must be one of psf, lip, psf_all_sides, none")


class FlowDirection(Enum):
    """Which (source, target) pairs receive parachute predicates."""
    DOWN = "down"
    UP = "up"
    BOTH = "both"

    @classmethod
    def from_string(cls, value: str) -> 'FlowDirection':
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"Invalid flow direction: {value}. Must be one of down, up, both")


@dataclass
class Query:
    """Aliased relations, equi-join edges, per-alias predicates and a projection."""

    relations: Dict[str, str]
    joins: List[JoinEdge] = field(default_factory=list)
    predicates: Dict[str, List[BasePredicate]] = field(default_factory=dict)
    parachute_predicates: Dict[str, List[ParachutePredicate]] = field(default_factory=dict)
    projection: List[ColumnRef] = field(default_factory=list)
    name: str = "query"

    def __post_init__(self):
        if not self.relations:
            raise PlanError("a query needs at least one relation")
        for edge in self.joins:
            for ref in (edge.left, edge.right):
                if ref.alias not in self.relations:
                    raise PlanError(f"join edge {edge} references undeclared alias {ref.alias}")
            if edge.left.alias == edge.right.alias:
                raise PlanError(f"join edge {edge} joins {edge.left.alias} with itself")
        for mapping in (self.predicates, self.parachute_predicates):
            for alias in mapping:
                if alias not in self.relations:
                    raise PlanError(f"predicates on undeclared alias {alias}")
        for ref in self.projection:
            if ref.alias not in self.relations:
                raise PlanError(f"projection references undeclared alias {ref.alias}")

    @property
    def aliases(self) -> List[str]:
        return list(self.relations)

    def table_of(self, alias: str) -> str:
        try:
            return self.relations[alias]
        except KeyError:
            raise PlanError(f"unknown alias {alias}")

    def predicates_of(self, alias: str) -> List[BasePredicate]:
        return list(self.predicates.get(alias, []))

    def parachutes_of(self, alias: str) -> List[ParachutePredicate]:
        return list(self.parachute_predicates.get(alias, []))

    def neighbours(self, alias: str) -> Set[str]:
        out = set()
        for edge in self.joins:
            if alias in edge.aliases:
                out.update(edge.aliases)
        out.discard(alias)
        return out

    def is_connected(self) -> bool:
        seen = set()
        stack = [self.aliases[0]]
        while stack:
            alias = stack.pop()
            if alias not in seen:
                seen.add(alias)
                stack.extend(self.neighbours(alias) - seen)
        return len(seen) == len(self.relations)

    def join_classes(self) -> Dict[ColumnRef, int]:
        """Query-local attribute classes: union-find over the join edges."""
        parent: Dict[ColumnRef, ColumnRef] = {}

        def find(ref):
            while parent[ref] != ref:
                parent[ref] = parent[parent[ref]]
                ref = parent[ref]
            return ref

        for edge in self.joins:
            for ref in (edge.left, edge.right):
                parent.setdefault(ref, ref)
            a, b = find(edge.left), find(edge.right)
            if a != b:
                parent[max(a, b)] = min(a, b)
        roots: Dict[ColumnRef, int] = {}
        classes = {}
        for ref in sorted(parent):
            root = find(ref)
            classes[ref] = roots.setdefault(root, len(roots))
        return classes

    def attributes_of(self, alias: str) -> Set[int]:
        """Classes of the join columns of ``alias``."""
        return {cls for ref, cls in self.join_classes().items() if ref.alias == alias}

    def validate(self, schema: Schema) -> None:
        """Check tables and columns against the schema and that the join graph is connected.

        Raises:
            PlanError: naming the offending alias, table or column
        """
        for alias, table in self.relations.items():
            if not schema.has_table(table):
                raise PlanError(f"alias {alias} references unknown table {table}")
        refs = [ref for edge in self.joins for ref in (edge.left, edge.right)] + list(self.projection)
        refs += [ColumnRef(alias, p.column) for alias, preds in self.predicates.items() for p in preds]
        for ref in refs:
            if not schema.table(self.relations[ref.alias]).has_column(ref.column):
                raise PlanError(f"{ref} is not a column of {self.relations[ref.alias]}")
        if not self.is_connected():
            raise PlanError(f"query {self.name} has a disconnected join graph")

    def with_parachutes(self, parachutes: Mapping[str, List[ParachutePredicate]]) -> 'Query':
        rewritten = copy.copy(self)
        rewritten.parachute_predicates = {alias: list(preds) for alias, preds in parachutes.items() if preds}
        return rewritten

    def without_parachutes(self) -> 'Query':
        return self.with_parachutes({})

    @staticmethod
    def create_from_json(source: Union[str, dict]) -> 'Query':
        """Create a Query from a dict, a JSON file path or a JSON string.

        Raises:
            jsonschema.ValidationError: If the document doesn't conform to the schema
            PlanError: If the document references undeclared aliases
        """
        data = load_document(source, "query")
        return Query(
            name=data.get("name", "query"),
            relations=dict(data["relations"]),
            joins=[JoinEdge.parse(e["left"], e["right"]) for e in data.get("joins", [])],
            predicates={
                alias: [predicate_from_dict(p) for p in preds]
                for alias, preds in data.get("predicates", {}).items()
            },
            parachute_predicates={
                alias: [ParachutePredicate.from_dict(p) for p in preds]
                for alias, preds in data.get("parachute_predicates", {}).items()
            },
            projection=[ColumnRef.parse(p) for p in data.get("projection", [])],
        )

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "name": self.name,
            "relations": dict(self.relations),
            "joins": [edge.to_dict() for edge in self.joins],
            "predicates": {alias: [p.to_dict() for p in preds] for alias, preds in self.predicates.items()},
            "projection": [str(ref) for ref in self.projection],
        }
        if self.parachute_predicates:
            data["parachute_predicates"] = {
                alias: [p.to_dict() for p in preds] for alias, preds in self.parachute_predicates.items()
            }
        return data

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


@dataclass
class PlanNode:
    """Leaf (``alias``) or hash join (``build`` on the left, ``probe`` on the right)."""

    alias: Optional[str] = None
    build: Optional['PlanNode'] = None
    probe: Optional['PlanNode'] = None
    condition: List[JoinEdge] = field(default_factory=list)

    def __post_init__(self):
        if self.is_leaf == (self.build is not None or self.probe is not None):
            raise PlanError("a plan node is either a leaf with an alias or a join with build and probe")
        if not self.is_leaf and (self.build is None or self.probe is None):
            raise PlanError("a join node needs both a build and a probe child")

    @classmethod
    def leaf(cls, alias: str) -> 'PlanNode':
        return cls(alias=alias)

    @classmethod
    def join(cls, build: 'PlanNode', probe: 'PlanNode', condition: Optional[List[JoinEdge]] = None) -> 'PlanNode':
        return cls(build=build, probe=probe, condition=list(condition or []))

    @property
    def is_leaf(self) -> bool:
        return self.alias is not None

    def leaves(self) -> List[str]:
        if self.is_leaf:
            return [self.alias]
        return self.build.leaves() + self.probe.leaves()

    def to_dict(self) -> Dict[str, Any]:
        if self.is_leaf:
            return {"alias": self.alias}
        data = {"build": self.build.to_dict(), "probe": self.probe.to_dict()}
        if self.condition:
            data["condition"] = [edge.to_dict() for edge in self.condition]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PlanNode':
        if "alias" in data:
            return cls.leaf(data["alias"])
        return cls.join(
            cls.from_dict(data["build"]),
            cls.from_dict(data["probe"]),
            [JoinEdge.parse(e["left"], e["right"]) for e in data.get("condition", [])],
        )


@dataclass
class QueryPlan:
    root: PlanNode

    @property
    def aliases(self) -> List[str]:
        return self.root.leaves()

    def validate(self, query: Query) -> None:
        """Leaves must be exactly the query aliases and every condition a declared edge.

        Raises:
            PlanError: on a mismatch
        """
        leaves = self.aliases
        if len(set(leaves)) != len(leaves):
            raise PlanError("an alias appears twice in the plan")
        if set(leaves) != set(query.relations):
            raise PlanError(f"plan leaves {sorted(leaves)} differ from query aliases {sorted(query.relations)}")
        for node in self.joins():
            for edge in node.condition:
                if not any(edge.same_as(declared) for declared in query.joins):
                    raise PlanError(f"plan condition {edge} is not a join edge of the query")
            if not join_condition(node, query):
                raise PlanError(
                    f"join of {sorted(node.build.leaves())} with {sorted(node.probe.leaves())} has no join edge"
                )

    def joins(self) -> List[PlanNode]:
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if not node.is_leaf:
                out.append(node)
                stack.extend((node.build, node.probe))
        return out

    @staticmethod
    def create_from_json(source: Union[str, dict]) -> 'QueryPlan':
        return QueryPlan(PlanNode.from_dict(load_document(source, "plan")))

    def to_dict(self) -> Dict[str, Any]:
        return self.root.to_dict()

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def join_condition(node: PlanNode, query: Query) -> List[JoinEdge]:
    """Edges a join node uses: its explicit condition, else every query edge across its sides."""
    if node.condition:
        return list(node.condition)
    build, probe = set(node.build.leaves()), set(node.probe.leaves())
    return [
        edge for edge in query.joins
        if (edge.left.alias in build and edge.right.alias in probe)
        or (edge.left.alias in probe and edge.right.alias in build)
    ]


@dataclass
class PipelineSet:
    """Pipeline id and probe flag per alias, plus the precedence between pipelines."""

    pipeline: Dict[str, int]
    is_probe: Dict[str, bool]
    probe_alias: Dict[int, str]
    before: Dict[int, Set[int]]

    @property
    def count(self) -> int:
        return len(self.probe_alias)

    def of(self, alias: str) -> int:
        try:
            return self.pipeline[alias]
        except KeyError:
            raise PlanError(f"alias {alias} is not in the plan")

    def less(self, p1: int, p2: int) -> bool:
        """``p1 < p2``: pipeline ``p2`` consumes the output of ``p1``."""
        return p1 in self.before.get(p2, set())

    def members(self, pipeline_id: int) -> List[str]:
        return [alias for alias, p in self.pipeline.items() if p == pipeline_id]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pipeline": dict(self.pipeline),
            "is_probe": dict(self.is_probe),
            "before": {str(p): sorted(q) for p, q in sorted(self.before.items())},
        }


def decompose_pipelines(plan: QueryPlan) -> PipelineSet:
    """Number the probe pipelines in completion order.

    A pipeline starts at the plan root or at any join used as a build side,
    and follows probe children down to its probe leaf.
    """
    pipeline: Dict[str, int] = {}
    is_probe: Dict[str, bool] = {}
    probe_alias: Dict[int, str] = {}
    before: Dict[int, Set[int]] = {}

    def visit(root: PlanNode) -> int:
        chain = []
        node = root
        while not node.is_leaf:
            chain.append(node)
            node = node.probe
        inputs: Set[int] = set()
        leaf_builds = []
        for join in reversed(chain):
            if join.build.is_leaf:
                leaf_builds.append(join.build.alias)
            else:
                child = visit(join.build)
                inputs.add(child)
                inputs.update(before[child])
        pid = len(probe_alias)
        probe_alias[pid] = node.alias
        before[pid] = inputs
        pipeline[node.alias] = pid
        is_probe[node.alias] = True
        for alias in leaf_builds:
            pipeline[alias] = pid
            is_probe[alias] = False
        return pid

    visit(plan.root)
    return PipelineSet(pipeline, is_probe, probe_alias, before)


def precedes(r: str, s: str, pipelines: PipelineSet) -> bool:
    if r == s:
        return False
    pr, ps = pipelines.of(r), pipelines.of(s)
    return pipelines.less(pr, ps) or (pr == ps and pipelines.is_probe[s])


def is_joinable(r: str, s: str, query: Query) -> bool:
    return bool(query.attributes_of(r) & query.attributes_of(s))


class FlowAnalyzer:
    """The one-hop flow relation of a plan and its transitive closure.

    Both are boolean matrices indexed by the query aliases in declaration order.
    """

    def __init__(self, query: Query, plan: QueryPlan, mode: FlowMode = FlowMode.PSF):
        plan.validate(query)
        self.query = query
        self.plan = plan
        self.mode = mode
        self.pipelines = decompose_pipelines(plan)
        self.aliases = query.aliases
        self.index = {alias: i for i, alias in enumerate(self.aliases)}
        classes = query.join_classes()
        self._attributes = {
            alias: {cls for ref, cls in classes.items() if ref.alias == alias} for alias in self.aliases
        }
        self.matrix = self._one_hop()
        self.closure = self._close(self.matrix)

    def joinable(self, r: str, s: str) -> bool:
        return bool(self._attributes[r] & self._attributes[s])

    def _flows(self, r: str, s: str) -> bool:
        if r == s or self.mode is FlowMode.NONE:
            return False
        p = self.pipelines
        if self.mode is FlowMode.LIP:
            return p.of(r) == p.of(s) and p.is_probe[s]
        base = precedes(r, s, p) and self.joinable(r, s)
        if self.mode is FlowMode.PSF:
            return base and p.is_probe[s]
        return base

    def _one_hop(self) -> np.ndarray:
        n = len(self.aliases)
        matrix = np.zeros((n, n), dtype=bool)
        for r in self.aliases:
            for s in self.aliases:
                matrix[self.index[r], self.index[s]] = self._flows(r, s)
        return matrix

    @staticmethod
    def _close(matrix: np.ndarray) -> np.ndarray:
        step = matrix.astype(np.int64)
        reach = matrix.copy()
        while True:
            grown = reach | ((reach.astype(np.int64) @ step) > 0)
            np.fill_diagonal(grown, False)
            if np.array_equal(grown, reach):
                return reach
            reach = grown

    def flows(self, r: str, s: str) -> bool:
        return bool(self.matrix[self.index[r], self.index[s]])

    def flows_transitive(self, r: str, s: str) -> bool:
        return bool(self.closure[self.index[r], self.index[s]])

    def flows_hops(self, r: str, s: str, n: int) -> bool:
        """``r`` reaches ``s`` in exactly ``n`` flow steps."""
        if n < 1:
            raise ValueError(f"hop count must be >= 1, got {n}")
        step = self.matrix.astype(np.int64)
        power = step.copy()
        for _ in range(n - 1):
            power = ((power @ step) > 0).astype(np.int64)
        return bool(power[self.index[r], self.index[s]])

    def matrix_rows(self) -> List[List[bool]]:
        return [[bool(v) for v in row] for row in self.closure]

    def render(self) -> str:
        """Text table of the transitive flow matrix (row flows to column)."""
        if len(self.aliases) < 2:
            return ""
        width = max(len(a) for a in self.aliases)
        header = " " * width + " " + " ".join(a.rjust(width) for a in self.aliases)
        lines = [header]
        for r in self.aliases:
            cells = ["1" if self.flows_transitive(r, s) else ("-" if r == s else "0") for s in self.aliases]
            lines.append(r.rjust(width) + " " + " ".join(c.rjust(width) for c in cells))
        return "\n".join(lines)


def flows(analyzer: FlowAnalyzer, r: str, s: str) -> bool:
    return analyzer.flows(r, s)


def flows_transitive(analyzer: FlowAnalyzer, r: str, s: str) -> bool:
    return analyzer.flows_transitive(r, s)


@dataclass(frozen=True)
class BlockedPair:
    source: str
    target: str
    descriptor: ParachuteDescriptor
    predicates: Tuple[BasePredicate, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "source": self.source,
            "target": self.target,
            "descriptor_id": self.descriptor.id,
            "column": self.descriptor.column_name,
            "predicates": [p.describe() for p in self.predicates],
        }


@dataclass(frozen=True)
class RewriteWarning:
    source: str
    target: str
    predicate: str
    reason: str

    def to_dict(self) -> Dict[str, str]:
        return {"source": self.source, "target": self.target, "predicate": self.predicate, "reason": self.reason}


def _joined_on(query: Query, classes: Dict[ColumnRef, int], a: ColumnRef, b: ColumnRef) -> bool:
    return a in classes and b in classes and classes[a] == classes[b]


def blocked_pairs(plan: QueryPlan, schema: Schema, query: Query, catalog: Catalog,
                  mode: FlowMode = FlowMode.PSF, direction: FlowDirection = FlowDirection.DOWN,
                  analyzer: Optional[FlowAnalyzer] = None) -> List[BlockedPair]:
    """Pairs where a parachute predicate can carry ``source``'s filter to ``target``.

    ``target`` must hold an FK on ``source`` that the query joins on, a one-hop
    descriptor must cover a filtered column of ``source``, and at least one of
    those predicates must translate.
    """
    if analyzer is None:
        analyzer = FlowAnalyzer(query, plan, mode)
    classes = query.join_classes()
    pairs: List[BlockedPair] = []
    for target in query.aliases:
        target_table = query.table_of(target)
        for source in query.aliases:
            if source == target or not query.predicates_of(source):
                continue
            reached = analyzer.flows_transitive(source, target)
            if direction is FlowDirection.DOWN and reached:
                continue
            if direction is FlowDirection.UP and not reached:
                continue
            source_table = query.table_of(source)
            for fk in schema.fk_edges(target_table, source_table):
                if not _joined_on(query, classes, ColumnRef(target, fk.fk_column), ColumnRef(source, fk.pk_column)):
                    continue
                for descriptor in catalog.for_fk_table(target_table):
                    if descriptor.pk_table != source_table or descriptor.transitive_from is not None:
                        continue
                    if catalog.fk_edge_of(descriptor).fk_column != fk.fk_column:
                        continue
                    preds = tuple(p for p in query.predicates_of(source) if p.column == descriptor.source_column)
                    if not preds or not any(_translates(p, descriptor) for p in preds):
                        continue
                    pairs.append(BlockedPair(source, target, descriptor, preds))
    order = analyzer.pipelines
    pairs.sort(key=lambda p: (order.of(p.target), p.target, p.source, p.descriptor.id))
    logger.debug("%d pair(s) selected for %s", len(pairs), query.name)
    return pairs


def _translates(pred: BasePredicate, descriptor: ParachuteDescriptor) -> bool:
    try:
        translate(pred, descriptor)
    except NotTranslatable:
        return False
    return True


def drop_parachutes(query: Query, pairs: Iterable[BlockedPair]) -> Tuple[Query, List[RewriteWarning]]:
    """Conjoin the translated source predicates to each target.

    Base predicates stay untouched. Predicates without a sound translation are
    skipped and reported.
    """
    parachutes = {alias: list(preds) for alias, preds in query.parachute_predicates.items()}
    warnings: List[RewriteWarning] = []
    for pair in pairs:
        descriptor = pair.descriptor
        for pred in pair.predicates:
            try:
                translated = translate(pred, descriptor)
            except NotTranslatable as e:
                warnings.append(RewriteWarning(pair.source, pair.target, pred.describe(), str(e)))
                logger.warning("skipped %s -> %s: %s", pair.source, pair.target, e)
                continue
            if isinstance(translated, AlwaysTrue):
                continue
            parachutes.setdefault(pair.target, []).append(ParachutePredicate(
                column=descriptor.column_name,
                descriptor_id=descriptor.id,
                source=f"{pair.source}.{pred.column}",
                translated=translated,
                marker=descriptor.marker,
            ))
    return query.with_parachutes(parachutes), warnings


# per-predicate selectivity guesses for greedy_plan
SELECTIVITY = {
    "compare=": 0.1,
    "compare!=": 0.9,
    "compare": 0.3,
    "between": 0.25,
    "in": 0.1,
    "is_null": 0.05,
    "like": 0.1,
    "ilike": 0.1,
    "regex": 0.1,
    "udf": 0.1,
}


def selectivity(pred: BasePredicate) -> float:
    if pred.type_name == "or":
        return min(1.0, sum(selectivity(arm) for arm in pred.arms))
    if pred.type_name == "compare":
        return SELECTIVITY.get("compare" + pred.op.value, SELECTIVITY["compare"])
    if pred.type_name == "in":
        return min(1.0, SELECTIVITY["in"] * max(1, len(pred.values)))
    return SELECTIVITY.get(pred.type_name, 0.5)


def greedy_plan(query: Query, table_rows: Mapping[str, int]) -> QueryPlan:
    """Left-deep plan over ascending estimated filtered cardinality.

    The composite built so far is always the build side of the next join.

    Raises:
        PlanError: If the join graph is disconnected
    """
    if not query.is_connected():
        raise PlanError(f"query {query.name} has a disconnected join graph")

    def estimate(alias: str) -> float:
        rows = float(table_rows.get(query.table_of(alias), 0))
        for pred in query.predicates_of(alias):
            rows *= selectivity(pred)
        return rows

    ranked = sorted(query.aliases, key=lambda a: (estimate(a), a))
    joined = [ranked[0]]
    remaining = ranked[1:]
    while remaining:
        frontier = set().union(*(query.neighbours(a) for a in joined))
        nxt = next(a for a in remaining if a in frontier)
        joined.append(nxt)
        remaining.remove(nxt)
    return left_deep_plan(joined)


def left_deep_plan(order: List[str]) -> QueryPlan:
    """Left-deep plan joining ``order`` one alias at a time; the first alias is the innermost build."""
    if not order:
        raise PlanError("a plan needs at least one alias")
    node = PlanNode.leaf(order[0])
    for alias in order[1:]:
        node = PlanNode.join(node, PlanNode.leaf(alias))
    return QueryPlan(node)
