"""Massively parallel sort-merge equi-join engine.

Two engine variants over T worker threads: a basic one (sort both inputs
chunk-wise, every worker merges its private run against all public runs) and
a range-partitioned one that redistributes the private input by key range
with CDF-balanced splitters so each worker touches only ~1/T of the public
data. A hash-join oracle, reproducible dataset generators, and a benchmark
CLI (`mpsm-bench`) round out the package.
"""

from ._kernels import warmup
from .core import (
    ConfigurationError,
    DomainError,
    FormatError,
    InternalConsistencyError,
    JoinConfig,
    JoinResult,
    KeyDomain,
    MaterializeCapExceeded,
    Relation,
    Run,
    Tuple64,
    ValidationReport,
    WorkerStats,
    chunk,
    validate_relation,
)
from .datagen import GenSpec, gen_location_skew, gen_skewed_8020, gen_uniform, generate, hash_join_oracle
from .engine import (
    PhasePlan,
    RoleAssignment,
    choose_roles,
    interpolation_search,
    merge_join,
    plan_phases,
    run_bmpsm,
    run_join,
    run_pmpsm,
)
from .skew import Cdf, LocalBounds, SplitterSet, build_cdf, cdf_eval, compute_splitters, local_equiheight_bounds, split_relevant_cost
from .sorter import RadixBoundaries, SortStats, introsort, radix_msd_pass, sort_run, sort_run_with_stats

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DomainError",
    "FormatError",
    "InternalConsistencyError",
    "JoinConfig",
    "JoinResult",
    "KeyDomain",
    "MaterializeCapExceeded",
    "Relation",
    "Run",
    "Tuple64",
    "ValidationReport",
    "WorkerStats",
    "chunk",
    "validate_relation",
    "GenSpec",
    "generate",
    "gen_uniform",
    "gen_skewed_8020",
    "gen_location_skew",
    "hash_join_oracle",
    "PhasePlan",
    "RoleAssignment",
    "choose_roles",
    "interpolation_search",
    "merge_join",
    "plan_phases",
    "run_bmpsm",
    "run_pmpsm",
    "run_join",
    "Cdf",
    "LocalBounds",
    "SplitterSet",
    "build_cdf",
    "cdf_eval",
    "compute_splitters",
    "local_equiheight_bounds",
    "split_relevant_cost",
    "RadixBoundaries",
    "SortStats",
    "introsort",
    "radix_msd_pass",
    "sort_run",
    "sort_run_with_stats",
    "warmup",
    "__version__",
]
