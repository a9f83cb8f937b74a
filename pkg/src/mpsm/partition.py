"""Private-input range partitioning: histograms, prefix cursors, scatter.

Each worker histograms its own chunk at 2^B-bucket radix granularity; the
histograms are combined once into per-(worker, partition) write cursors whose
regions tile every target run exactly, so the subsequent scatter needs no
locks, no atomics, and no key comparisons. Partition runs live side by side
in a single arena; cursors are absolute offsets into it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .core import (
    ConfigurationError,
    DomainError,
    InternalConsistencyError,
    KeyDomain,
    Relation,
)


@dataclass(frozen=True)
class RadixHistogram:
    """Bucket counts of one worker's chunk at 2^radix_bits granularity."""

    counts: np.ndarray
    radix_bits: int

    def __post_init__(self) -> None:
        if self.counts.shape[0] != 1 << self.radix_bits:
            raise ValueError("histogram length must be 2^radix_bits")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class SplitterVector:
    """Non-decreasing map from radix bucket to target partition."""

    sp: np.ndarray
    n_partitions: int

    def __post_init__(self) -> None:
        sp = np.ascontiguousarray(self.sp, dtype=np.int64)
        object.__setattr__(self, "sp", sp)
        if sp.shape[0] == 0:
            raise ValueError("splitter vector must cover at least one bucket")
        if np.any(np.diff(sp) < 0):
            raise ValueError("splitter vector must be non-decreasing")
        if int(sp[0]) < 0 or int(sp[-1]) >= self.n_partitions:
            raise ValueError("splitter vector entries must lie in [0, n_partitions)")

    @classmethod
    def identity(cls, n_buckets: int) -> "SplitterVector":
        return cls(np.arange(n_buckets, dtype=np.int64), n_buckets)

    @classmethod
    def from_bucket_bounds(cls, bucket_bounds: Sequence[int], n_buckets: int) -> "SplitterVector":
        """bucket_bounds[j]..bucket_bounds[j+1] is the bucket range of partition j."""
        bounds = list(bucket_bounds)
        n_parts = len(bounds) - 1
        sp = np.empty(n_buckets, dtype=np.int64)
        for j in range(n_parts):
            sp[bounds[j] : bounds[j + 1]] = j
        return cls(sp, n_parts)


def effective_radix_bits(dom: KeyDomain, radix_bits: int) -> int:
    """Clamp the histogram bit count to the domain's significant width."""
    if radix_bits > dom.width_bits:
        warnings.warn(
            f"radix_bits={radix_bits} exceeds domain width {dom.width_bits}; clamping",
            stacklevel=2,
        )
        return dom.width_bits
    return radix_bits


def normalize_key(key: int, dom: KeyDomain, radix_bits: int) -> int:
    """Top radix_bits bits of (key - dom.lower), left-aligned to width_bits.

    Monotone non-decreasing in key, so bucket ranges are key ranges.
    """
    if radix_bits > dom.width_bits:
        raise ConfigurationError(
            f"radix_bits={radix_bits} exceeds domain width {dom.width_bits}"
        )
    if not dom.contains(key):
        raise DomainError(f"key {key} outside domain [{dom.lower}, {dom.upper})")
    return (key - dom.lower) >> (dom.width_bits - radix_bits)


def bucket_lower_key(bucket: int, dom: KeyDomain, radix_bits: int) -> int:
    """Smallest raw key of a bucket (the inverse of normalize_key at edges).

    Accepts bucket == 2^radix_bits as the exclusive top edge; the result may
    then exceed dom.upper, which CDF evaluation clamps anyway.
    """
    return dom.lower + (bucket << (dom.width_bits - radix_bits))


def build_radix_histogram(chunk: Relation, dom: KeyDomain, radix_bits: int) -> RadixHistogram:
    """Count the chunk's tuples per radix bucket (clamping B to the domain width)."""
    b = effective_radix_bits(dom, radix_bits)
    counts = np.zeros(1 << b, np.int64)
    if chunk.cardinality:
        shift = np.uint64(dom.width_bits - b)
        bad = _kernels.radix_histogram(chunk.keys, np.uint64(dom.lower), shift, counts)
        if bad >= 0:
            raise DomainError(
                f"key {int(chunk.keys[bad])} at index {bad} outside domain "
                f"[{dom.lower}, {dom.upper})"
            )
    return RadixHistogram(counts, b)


@dataclass(frozen=True)
class PrefixCursors:
    """Write regions per (worker, partition), derived from combined histograms.

    starts[i, j] is worker i's first slot within partition run j (relative to
    the run), counts[i, j] the number of slots it owns there. Regions of
    distinct workers tile each run exactly; run_base turns them into absolute
    arena offsets.
    """

    starts: np.ndarray
    counts: np.ndarray
    run_sizes: np.ndarray
    run_base: np.ndarray

    @property
    def n_workers(self) -> int:
        return int(self.starts.shape[0])

    @property
    def n_partitions(self) -> int:
        return int(self.starts.shape[1])

    @property
    def total(self) -> int:
        return int(self.run_sizes.sum())

    def region(self, worker: int, part: int) -> tuple:
        s = int(self.starts[worker, part])
        return s, s + int(self.counts[worker, part])

    def absolute_cursors(self, worker: int) -> tuple:
        cur = (self.run_base[:-1] + self.starts[worker]).astype(np.int64)
        ends = cur + self.counts[worker]
        return cur, ends

    def verify_disjoint(self) -> None:
        """Check that per-worker regions tile [0, run_size) for every run."""
        for j in range(self.n_partitions):
            pos = 0
            for i in range(self.n_workers):
                if int(self.starts[i, j]) != pos:
                    raise InternalConsistencyError(
                        f"worker {i} region for partition {j} starts at "
                        f"{int(self.starts[i, j])}, expected {pos}"
                    )
                pos += int(self.counts[i, j])
            if pos != int(self.run_sizes[j]):
                raise InternalConsistencyError(
                    f"partition {j} regions cover {pos} slots, run size is "
                    f"{int(self.run_sizes[j])}"
                )


def combine_prefix_cursors(
    histograms: Sequence[RadixHistogram], sp: SplitterVector
) -> PrefixCursors:
    """Fold per-worker bucket histograms into partition-level write cursors.

    Worker i's start in partition j is the sum of all lower-numbered workers'
    counts for j, so the scatter of T workers into shared runs is free of
    synchronization by construction.
    """
    if not histograms:
        raise ConfigurationError("need at least one histogram")
    bits = histograms[0].radix_bits
    if any(h.radix_bits != bits for h in histograms):
        raise ConfigurationError("histograms disagree on radix_bits")
    if sp.sp.shape[0] != 1 << bits:
        raise ConfigurationError("splitter vector does not cover the bucket grid")
    t = len(histograms)
    p = sp.n_partitions
    counts = np.zeros((t, p), np.int64)
    for i, h in enumerate(histograms):
        np.add.at(counts[i], sp.sp, h.counts)
    starts = np.zeros_like(counts)
    if t > 1:
        starts[1:] = np.cumsum(counts[:-1], axis=0)
    run_sizes = counts.sum(axis=0)
    run_base = np.zeros(p + 1, np.int64)
    np.cumsum(run_sizes, out=run_base[1:])
    return PrefixCursors(starts, counts, run_sizes, run_base)


@dataclass(frozen=True, eq=False)
class PartitionArena:
    """Backing storage for all partition runs, laid out consecutively."""

    keys: np.ndarray
    payloads: np.ndarray
    run_base: np.ndarray

    @property
    def n_partitions(self) -> int:
        return int(self.run_base.shape[0]) - 1

    def run_view(self, part: int) -> Relation:
        a, b = int(self.run_base[part]), int(self.run_base[part + 1])
        return Relation(self.keys[a:b], self.payloads[a:b])


def allocate_partition_arena(cursors: PrefixCursors) -> PartitionArena:
    n = cursors.total
    return PartitionArena(
        np.empty(n, np.uint64), np.empty(n, np.uint64), cursors.run_base.copy()
    )


def scatter(
    chunk: Relation,
    worker: int,
    cursors: PrefixCursors,
    sp: SplitterVector,
    dom: KeyDomain,
    arena: PartitionArena,
) -> None:
    """Copy one worker's chunk into its precomputed regions of the target runs.

    Branch-free on the data path: partition choice is two table lookups
    (radix bucket, then splitter vector), no key comparisons. Raises
    InternalConsistencyError if the chunk disagrees with the histogram the
    cursors were built from (region overflow or underflow), DomainError for
    out-of-domain keys.
    """
    bits = int(np.log2(sp.sp.shape[0]))
    if 1 << bits != sp.sp.shape[0]:
        raise ConfigurationError("splitter vector length must be a power of two")
    shift = np.uint64(dom.width_bits - bits)
    cur, ends = cursors.absolute_cursors(worker)
    bad = _kernels.scatter_chunk(
        chunk.keys,
        chunk.payloads,
        np.uint64(dom.lower),
        shift,
        sp.sp,
        cur,
        ends,
        arena.keys,
        arena.payloads,
    )
    if bad >= 0:
        key = int(chunk.keys[bad])
        if not dom.contains(key):
            raise DomainError(f"key {key} at index {bad} outside domain")
        raise InternalConsistencyError(
            f"worker {worker} write cursor overflowed its region at tuple {bad}; "
            "histogram and chunk disagree"
        )
    if not np.array_equal(cur, ends):
        raise InternalConsistencyError(
            f"worker {worker} scattered fewer tuples than its histogram promised"
        )
