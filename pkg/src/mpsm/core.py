"""Core domain types shared by every stage of the join engine.

Relations are stored columnar: one uint64 array of join keys and one of
payloads, kept in lockstep. All types are cheap frozen wrappers around that
storage; the arrays themselves are mutated in place only by the sort phase,
which owns its segment exclusively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

KEY_DTYPE = np.uint64
DEFAULT_KEY_UPPER = 1 << 32
MASK64 = (1 << 64) - 1

ALGORITHMS = ("b-mpsm", "p-mpsm", "hash-oracle")
ROLE_POLICIES = ("auto", "r-private", "s-private")
QUERY_MODES = ("aggregate-max", "count", "materialize")


class ConfigurationError(ValueError):
    """Invalid knob combination (thread count, radix bits, sweep shape...)."""


class DomainError(ValueError):
    """A join key falls outside the declared key domain."""


class FormatError(ValueError):
    """Malformed relation file."""

    def __init__(self, message: str, byte_offset: Optional[int] = None):
        if byte_offset is not None:
            message = f"{message} (at byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class InternalConsistencyError(RuntimeError):
    """Histogram/cursor/scatter bookkeeping disagreed; indicates a bug."""


class MaterializeCapExceeded(RuntimeError):
    """Join output larger than the configured materialization cap."""


class Tuple64(NamedTuple):
    """One 16-byte record: 64-bit join key plus 64-bit payload."""

    joinkey: int
    payload: int


@dataclass(frozen=True)
class KeyDomain:
    """Half-open key range [lower, upper) with a derived significant width.

    width_bits is ceil(log2(upper - lower)): the number of key bits that can
    vary after subtracting the lower bound, which is what radix bucketing
    shifts against.
    """

    lower: int = 0
    upper: int = DEFAULT_KEY_UPPER

    def __post_init__(self) -> None:
        if not (0 <= self.lower < self.upper <= 1 << 64):
            raise ConfigurationError(
                f"key domain must satisfy 0 <= lower < upper <= 2^64, "
                f"got [{self.lower}, {self.upper})"
            )

    @property
    def width(self) -> int:
        return self.upper - self.lower

    @property
    def width_bits(self) -> int:
        return (self.width - 1).bit_length()

    def contains(self, key: int) -> bool:
        return self.lower <= key < self.upper


def _as_u64(arr: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(arr)
    if a.dtype != KEY_DTYPE:
        a = a.astype(KEY_DTYPE)
    if a.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return a


@dataclass(frozen=True, eq=False)
class Relation:
    """A sequence of tuples in columnar storage (no ordering implied)."""

    keys: np.ndarray
    payloads: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "keys", _as_u64(self.keys, "keys"))
        object.__setattr__(self, "payloads", _as_u64(self.payloads, "payloads"))
        if self.keys.shape[0] != self.payloads.shape[0]:
            raise ValueError("keys and payloads must have equal length")

    @classmethod
    def from_tuples(cls, tuples: Sequence[tuple]) -> "Relation":
        keys = np.array([t[0] for t in tuples], dtype=KEY_DTYPE)
        pays = np.array([t[1] for t in tuples], dtype=KEY_DTYPE)
        return cls(keys, pays)

    @classmethod
    def empty(cls) -> "Relation":
        return cls(np.empty(0, KEY_DTYPE), np.empty(0, KEY_DTYPE))

    @property
    def cardinality(self) -> int:
        return int(self.keys.shape[0])

    def __len__(self) -> int:
        return self.cardinality

    def tuple_at(self, i: int) -> Tuple64:
        return Tuple64(int(self.keys[i]), int(self.payloads[i]))

    def __iter__(self) -> Iterator[Tuple64]:
        for k, p in zip(self.keys.tolist(), self.payloads.tolist()):
            yield Tuple64(k, p)

    def copy(self) -> "Relation":
        return Relation(self.keys.copy(), self.payloads.copy())


@dataclass(frozen=True, eq=False)
class Run:
    """A relation fragment sorted ascending by join key."""

    keys: np.ndarray
    payloads: np.ndarray
    origin_worker: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "keys", _as_u64(self.keys, "keys"))
        object.__setattr__(self, "payloads", _as_u64(self.payloads, "payloads"))
        if self.keys.shape[0] != self.payloads.shape[0]:
            raise ValueError("keys and payloads must have equal length")
        if self.keys.shape[0] > 1 and not bool(np.all(self.keys[:-1] <= self.keys[1:])):
            raise ValueError("run keys are not sorted ascending")

    @property
    def cardinality(self) -> int:
        return int(self.keys.shape[0])

    def __len__(self) -> int:
        return self.cardinality


@dataclass(frozen=True)
class JoinConfig:
    """Everything a join run needs besides the two relations."""

    threads: int = 1
    radix_bits: int = 10
    cdf_fanout: int = 4
    algorithm: str = "p-mpsm"
    role_policy: str = "auto"
    query_mode: str = "aggregate-max"
    key_domain: KeyDomain = field(default_factory=KeyDomain)
    materialize_cap: int = 1 << 20
    pin_workers: bool = False

    def __post_init__(self) -> None:
        if self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")
        if self.cdf_fanout < 1:
            raise ConfigurationError(f"cdf_fanout must be >= 1, got {self.cdf_fanout}")
        if (1 << self.radix_bits) < self.threads:
            raise ConfigurationError(
                f"need 2^radix_bits >= threads, got B={self.radix_bits}, T={self.threads}"
            )
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}")
        if self.role_policy not in ROLE_POLICIES:
            raise ConfigurationError(f"unknown role policy {self.role_policy!r}")
        if self.query_mode not in QUERY_MODES:
            raise ConfigurationError(f"unknown query mode {self.query_mode!r}")


@dataclass
class WorkerStats:
    """Per-worker instrumentation collected by the engines.

    public_tuples_examined counts the distinct public-run positions the
    worker read while merge-scanning, plus every interpolation-search probe
    read (the latter also reported separately in probe_tuples_examined).
    """

    worker: int
    tuples_sorted_public: int = 0
    tuples_sorted_private: int = 0
    tuples_scattered: int = 0
    public_tuples_examined: int = 0
    probe_tuples_examined: int = 0
    s_runs_with_matches: int = 0
    heapsort_fallbacks: int = 0
    sort_public_seconds: float = 0.0
    sort_private_seconds: float = 0.0
    join_seconds: float = 0.0


@dataclass
class JoinResult:
    """Join output plus phase timings and instrumentation.

    aggregate_max is the maximum of (r.payload + s.payload) over all matches,
    present only in aggregate-max mode with at least one match. Payload sums
    are uint64; callers are expected to keep payloads below 2^63 so sums never
    wrap. materialized is an (n, 2) array of (r_payload, s_payload) pairs in
    materialize mode.
    """

    match_count: int
    aggregate_max: Optional[int] = None
    materialized: Optional[np.ndarray] = None
    phase_timings: dict = field(default_factory=dict)
    worker_stats: list = field(default_factory=list)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of checking a relation against a key domain (report-only)."""

    cardinality: int
    violation_count: int
    sample_indices: tuple = ()

    @property
    def ok(self) -> bool:
        return self.violation_count == 0


def validate_relation(rel: Relation, dom: KeyDomain) -> ValidationReport:
    """Count keys outside [dom.lower, dom.upper); never mutates, never raises."""
    if rel.cardinality == 0:
        return ValidationReport(0, 0)
    lower = np.uint64(dom.lower)
    bad = rel.keys < lower
    if dom.upper < 1 << 64:
        bad |= rel.keys >= np.uint64(dom.upper)
    n_bad = int(np.count_nonzero(bad))
    sample: tuple = ()
    if n_bad:
        sample = tuple(int(i) for i in np.flatnonzero(bad)[:8])
    return ValidationReport(rel.cardinality, n_bad, sample)


def chunk(rel: Relation, t: int) -> list:
    """Split a relation into t contiguous zero-copy chunks.

    Sizes differ by at most one; the remainder goes to the lowest-indexed
    chunks. Concatenating the chunks in order reproduces the relation.
    """
    if t < 1:
        raise ConfigurationError(f"chunk count must be >= 1, got {t}")
    n = rel.cardinality
    base, rem = divmod(n, t)
    chunks = []
    start = 0
    for i in range(t):
        size = base + (1 if i < rem else 0)
        chunks.append(Relation(rel.keys[start : start + size], rel.payloads[start : start + size]))
        start += size
    return chunks
