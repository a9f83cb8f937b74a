"""Three-phase run sorting: MSD radix pass, introsort, final insertion pass.

The radix pass clusters in place on the top (up to) 8 significant bits of the
normalized key, introsort handles each bucket down to 16-element fragments
with a hard recursion cap of 2*log2(n) before falling back to heapsort, and a
single left-to-right insertion pass finishes the run. Sorting is not stable;
payload order among equal keys is unspecified.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import DomainError, KeyDomain, Relation, Run

INSERTION_THRESHOLD = _kernels.INSERTION_THRESHOLD


@dataclass(frozen=True)
class RadixBoundaries:
    """Bucket start offsets plus the end offset after the MSD radix pass.

    offsets has bucket_count + 1 entries; bucket k occupies
    [offsets[k], offsets[k+1]). bucket_count is 2^min(8, width_bits), so
    narrow domains degenerate to fewer buckets.
    """

    offsets: np.ndarray
    radix_bits: int

    @property
    def bucket_count(self) -> int:
        return 1 << self.radix_bits


@dataclass(frozen=True)
class SortStats:
    heapsort_fallbacks: int = 0


def _check_domain(keys: np.ndarray, dom: KeyDomain) -> None:
    if keys.shape[0] == 0:
        return
    bad = keys < np.uint64(dom.lower)
    if dom.upper < 1 << 64:
        bad |= keys >= np.uint64(dom.upper)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DomainError(
            f"key {int(keys[i])} at index {i} outside domain [{dom.lower}, {dom.upper})"
        )


def radix_msd_pass(rel: Relation, dom: KeyDomain) -> RadixBoundaries:
    """Cluster the relation in place by the top 8 significant key bits.

    Bucket index is the top min(8, width_bits) bits of (key - dom.lower);
    no ordering is guaranteed within a bucket.
    """
    _check_domain(rel.keys, dom)
    eff = min(8, dom.width_bits)
    nbuckets = 1 << eff
    shift = np.uint64(dom.width_bits - eff)
    bounds = np.empty(nbuckets + 1, np.int64)
    bad = _kernels.radix_cluster(
        rel.keys, rel.payloads, 0, rel.cardinality, np.uint64(dom.lower), shift, nbuckets, bounds
    )
    if bad >= 0:
        raise DomainError(f"key at index {bad} outside domain")
    return RadixBoundaries(bounds, eff)


def introsort(keys: np.ndarray, payloads: np.ndarray, lo: int = 0, hi: int | None = None) -> SortStats:
    """Depth-capped quicksort of [lo, hi); sub-16-element fragments are left
    for a final insertion pass (see sort_run)."""
    if hi is None:
        hi = keys.shape[0]
    fallbacks = _kernels.introsort_range(keys, payloads, lo, hi)
    return SortStats(int(fallbacks))


def insertion_pass(keys: np.ndarray, payloads: np.ndarray, lo: int = 0, hi: int | None = None) -> None:
    if hi is None:
        hi = keys.shape[0]
    _kernels.insertion_pass(keys, payloads, lo, hi)


def sort_run_with_stats(rel: Relation, dom: KeyDomain, origin_worker: int = 0) -> tuple:
    """Sort the relation in place into a Run; also report sort statistics."""
    _check_domain(rel.keys, dom)
    fallbacks = _kernels.three_phase_sort(
        rel.keys, rel.payloads, 0, rel.cardinality, np.uint64(dom.lower), dom.width_bits
    )
    if fallbacks < 0:
        raise DomainError("key outside domain during radix pass")
    run = Run(rel.keys, rel.payloads, origin_worker)
    return run, SortStats(int(fallbacks))


def sort_run(rel: Relation, dom: KeyDomain, origin_worker: int = 0) -> Run:
    """Sort the relation in place by join key and wrap it as a Run."""
    run, _ = sort_run_with_stats(rel, dom, origin_worker)
    return run
