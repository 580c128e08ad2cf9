"""
parachute - precomputed filter columns for sideways information passing
"""

from .version import __version__

from .attach import AttachConfig, AttachSpec, ParachuteAttacher, load_attach_specs
from .bundle import load_bundle, save_bundle
from .catalog import Catalog, DescriptorKind, ParachuteDescriptor, register_parachute
from .engine import EngineConfig, ExecutionMode, dangling_report, execute, prepare_query
from .errors import ParachuteError
from .fingerprint import BytePartition
from .histogram import EquiDepthHistogram
from .oracle import OracleSets, semijoin_reduce, verify_no_false_negatives
from .planner import (
    FlowAnalyzer,
    FlowDirection,
    FlowMode,
    Query,
    QueryPlan,
    blocked_pairs,
    decompose_pipelines,
    drop_parachutes,
    flows,
    flows_transitive,
)
from .schema import Schema
from .storage import Database, PackedColumn
from .translate import translate

__all__ = [
    '__version__',
    'AttachConfig',
    'AttachSpec',
    'ParachuteAttacher',
    'load_attach_specs',
    'load_bundle',
    'save_bundle',
    'Catalog',
    'DescriptorKind',
    'ParachuteDescriptor',
    'register_parachute',
    'EngineConfig',
    'ExecutionMode',
    'dangling_report',
    'execute',
    'prepare_query',
    'ParachuteError',
    'BytePartition',
    'EquiDepthHistogram',
    'OracleSets',
    'semijoin_reduce',
    'verify_no_false_negatives',
    'FlowAnalyzer',
    'FlowDirection',
    'FlowMode',
    'Query',
    'QueryPlan',
    'blocked_pairs',
    'decompose_pipelines',
    'drop_parachutes',
    'flows',
    'flows_transitive',
    'Schema',
    'Database',
    'PackedColumn',
    'translate',
]
