"""Skew-resilient splitter computation from public and private distributions.

The public side contributes equi-height bounds read off each sorted run at
no cost; merged, they form a global step-function CDF estimating how many
public tuples lie below any key. The private side contributes a fine-grained
radix histogram. Splitters are chosen at bucket granularity to minimize the
largest per-partition cost

    |R_i| * log2(|R_i|) + T * |R_i| + cdf(high_i) - cdf(low_i)

(sort cost, private-run scan cost, relevant public span; 0*log(0) is 0).
The units are plain tuple operations with no relative weighting; if sort and
scan throughput diverge strongly on some host, the two terms could be
weighted, which is left as a knob-free simplification here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import ConfigurationError, InternalConsistencyError, KeyDomain, Run
from .partition import SplitterVector, bucket_lower_key

EXACT_SEARCH_MAX_BUCKETS = 256
_FLOAT_SEARCH_ITERS = 80


@dataclass(frozen=True)
class LocalBounds:
    """Equi-height sample of one sorted public run.

    bound_keys holds the keys at ranks ceil(n*m/k) for m = 1..k (k = f*T);
    each bound stands for run_size/k tuples. Empty runs contribute nothing.
    """

    bound_keys: np.ndarray
    run_size: int

    @property
    def n_bounds(self) -> int:
        return int(self.bound_keys.shape[0])

    @property
    def weight_per_bound(self) -> float:
        return self.run_size / self.n_bounds if self.n_bounds else 0.0


def local_equiheight_bounds(run: Run, f: int, t: int) -> LocalBounds:
    """Read f*t equi-height bounds off a sorted run (free: just indexing)."""
    k = f * t
    if k < 1:
        raise ConfigurationError("f * T must be >= 1")
    n = run.cardinality
    if n == 0:
        return LocalBounds(np.empty(0, np.uint64), 0)
    ms = np.arange(1, k + 1, dtype=np.int64)
    pos = (n * ms + k - 1) // k - 1
    return LocalBounds(run.keys[pos].copy(), n)


@dataclass(frozen=True)
class Cdf:
    """Global step function: estimated count of public tuples below a key.

    Steps are merged bounds from all workers (duplicate keys collapsed);
    evaluation interpolates linearly between neighboring steps, anchored at
    (anchor_key, 0) below the first step and clamped to total above the last.
    """

    step_keys: np.ndarray
    step_cum: np.ndarray
    total: int
    anchor_key: int = 0

    def eval_many(self, probe_keys: np.ndarray) -> np.ndarray:
        """Vectorized evaluation; exact step hits return the step's cumulative
        count, probes below the first step interpolate from (anchor_key, 0),
        probes at or past the last step return the total."""
        keys = self.step_keys
        n = keys.shape[0]
        probes = np.asarray(probe_keys, np.uint64)
        out = np.zeros(probes.shape[0], np.float64)
        if n == 0 or self.total == 0:
            return out
        idx = np.searchsorted(keys, probes, side="left")
        above = idx >= n
        out[above] = float(self.total)
        inside = ~above
        ii = idx[inside]
        pk = probes[inside]
        hi_key = keys[ii]
        hi_cum = self.step_cum[ii]
        exact = hi_key == pk
        lo_key = np.where(ii > 0, keys[np.maximum(ii - 1, 0)], np.uint64(self.anchor_key))
        lo_cum = np.where(ii > 0, self.step_cum[np.maximum(ii - 1, 0)], 0.0)
        below = pk <= np.uint64(self.anchor_key)
        # in the interpolation branch lo_key < pk < hi_key holds
        denom = (hi_key - lo_key).astype(np.float64)
        denom[denom == 0] = 1.0
        frac = (pk - lo_key).astype(np.float64) / denom
        vals = lo_cum + frac * (hi_cum - lo_cum)
        vals = np.where(below, 0.0, vals)
        vals = np.where(exact, hi_cum, vals)
        out[inside] = vals
        return out

    def eval(self, key: int) -> float:
        key = min(max(int(key), 0), (1 << 64) - 1)
        return float(self.eval_many(np.array([key], np.uint64))[0])


def build_cdf(all_bounds: Sequence[LocalBounds], *, anchor_key: int = 0) -> Cdf:
    """Merge per-worker equi-height bounds into the global CDF.

    Each bound contributes a step of height run_size/(f*T); duplicate keys
    are collapsed by accumulating their heights.
    """
    keys_parts = []
    weight_parts = []
    total = 0
    for lb in all_bounds:
        total += lb.run_size
        if lb.n_bounds:
            keys_parts.append(lb.bound_keys)
            weight_parts.append(np.full(lb.n_bounds, lb.weight_per_bound))
    if not keys_parts:
        return Cdf(np.empty(0, np.uint64), np.empty(0, np.float64), total, anchor_key)
    keys = np.concatenate(keys_parts)
    weights = np.concatenate(weight_parts)
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    cum = np.cumsum(weights[order])
    # collapse duplicate keys, keeping the last (largest) cumulative value
    keep = np.empty(keys.shape[0], bool)
    keep[:-1] = keys[:-1] != keys[1:]
    keep[-1] = True
    return Cdf(keys[keep], cum[keep], total, anchor_key)


def cdf_eval(cdf: Cdf, key: int) -> float:
    return cdf.eval(key)


def split_relevant_cost(n_private: int, t: int, s_span: float) -> float:
    """Estimated cost of one partition: sort + private scans + public span."""
    if s_span < 0:
        raise ValueError("s_span must be non-negative")
    sort_cost = n_private * math.log2(n_private) if n_private > 0 else 0.0
    return sort_cost + t * n_private + s_span


@dataclass(frozen=True)
class SplitterSet:
    """T-1 splitter keys at radix-bucket granularity plus derived artifacts.

    bucket_bounds has T+1 entries; partition j owns buckets
    [bucket_bounds[j], bucket_bounds[j+1]) and keys below splitter_keys[j]
    (its exclusive upper key edge, except for the last partition).
    """

    splitter_keys: np.ndarray
    bucket_bounds: np.ndarray
    vector: SplitterVector
    partition_sizes: np.ndarray
    partition_costs: np.ndarray

    @property
    def n_partitions(self) -> int:
        return int(self.partition_sizes.shape[0])

    @property
    def max_cost(self) -> float:
        return float(self.partition_costs.max())


def _minmax_contiguous(
    n: int,
    t: int,
    seg_cost: Callable[[int, int], float],
    batch_costs: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> list:
    """Partition buckets 0..n into t contiguous non-empty ranges minimizing
    the largest seg_cost(a, b); ties broken toward the lexicographically
    smallest boundary sequence.

    Binary search on the cost bound with a greedy feasibility sweep; segment
    costs are monotone under extension, so greedy packing is an exact
    feasibility test. The bound search runs over the exact set of candidate
    segment costs when n is small enough, else over floats to convergence.
    """
    if t > n:
        raise ConfigurationError(f"cannot split {n} buckets into {t} partitions")
    if t == 1:
        return [0, n]

    def max_extend(a: int, bound: float) -> int:
        # largest b in (a, n] with seg_cost(a, b) <= bound (monotone in b)
        lo, hi = a + 1, n
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if seg_cost(a, mid) <= bound:
                lo = mid
            else:
                hi = mid - 1
        return lo

    def feasible(bound: float) -> bool:
        if seg_cost(0, 1) > bound:
            return False
        a, parts = 0, 0
        while a < n:
            if seg_cost(a, a + 1) > bound:
                return False
            a = max_extend(a, bound)
            parts += 1
            if parts > t:
                return False
        return True

    if n <= EXACT_SEARCH_MAX_BUCKETS:
        aa, bb = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        mask = aa < bb
        cand = np.unique(batch_costs(aa[mask], bb[mask]))
        lo, hi = 0, cand.shape[0] - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if feasible(float(cand[mid])):
                hi = mid
            else:
                lo = mid + 1
        best = float(cand[lo])
    else:
        singles = batch_costs(np.arange(n), np.arange(1, n + 1))
        lo_c, hi_c = float(singles.max()), float(seg_cost(0, n))
        for _ in range(_FLOAT_SEARCH_ITERS):
            mid = 0.5 * (lo_c + hi_c)
            if feasible(mid):
                hi_c = mid
            else:
                lo_c = mid
            if hi_c - lo_c <= 1e-9 * max(1.0, abs(hi_c)):
                break
        best = hi_c

    # suffix part counts at the optimal bound (greedy from each start)
    jump = [0] * n
    for a in range(n):
        jump[a] = max_extend(a, best)
    g = [0] * (n + 1)
    for a in range(n - 1, -1, -1):
        g[a] = 1 + g[jump[a]]

    # lexicographically smallest boundaries: take the shortest feasible prefix
    bounds = [0]
    a = 0
    for p in range(1, t):
        remaining = t - p
        e = a + 1
        limit = n - remaining
        while e <= limit:
            if seg_cost(a, e) <= best and g[e] <= remaining:
                break
            e += 1
        if e > limit:
            raise InternalConsistencyError("no feasible boundary at the optimal bound")
        bounds.append(e)
        a = e
    bounds.append(n)
    return bounds


def _edge_cdf(cdf: Cdf, dom: KeyDomain, radix_bits: int) -> np.ndarray:
    """CDF values at every bucket-edge key (the top edge clamps to uint64)."""
    n = 1 << radix_bits
    shift_amt = dom.width_bits - radix_bits
    top = (1 << 64) - 1
    edges = np.array(
        [min(dom.lower + (e << shift_amt), top) for e in range(n + 1)], np.uint64
    )
    return cdf.eval_many(edges)


def compute_splitters(
    r_hist: np.ndarray, cdf: Cdf, t: int, dom: KeyDomain, radix_bits: int
) -> SplitterSet:
    """Choose T-1 splitters over the 2^B bucket grid minimizing the largest
    split-relevant cost; the public span of a partition is the CDF difference
    at its bucket-edge keys."""
    n = int(r_hist.shape[0])
    if n != 1 << radix_bits:
        raise ConfigurationError("histogram length must be 2^radix_bits")
    if n < t:
        raise ConfigurationError(f"buckets ({n}) must be >= partitions ({t})")
    prefix = np.zeros(n + 1, np.int64)
    np.cumsum(r_hist, out=prefix[1:])
    edge_cdf = _edge_cdf(cdf, dom, radix_bits)

    def seg_cost(a: int, b: int) -> float:
        size = int(prefix[b] - prefix[a])
        return split_relevant_cost(size, t, float(edge_cdf[b] - edge_cdf[a]))

    def batch_costs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        sizes = (prefix[b] - prefix[a]).astype(np.float64)
        spans = edge_cdf[b] - edge_cdf[a]
        logs = np.zeros_like(sizes)
        nz = sizes > 0
        logs[nz] = np.log2(sizes[nz])
        return sizes * logs + t * sizes + spans

    bounds = _minmax_contiguous(n, t, seg_cost, batch_costs)
    return _splitter_set_from_bounds(bounds, r_hist, prefix, edge_cdf, t, dom, radix_bits)


def compute_size_balanced_splitters(
    r_hist: np.ndarray, cdf: Cdf, t: int, dom: KeyDomain, radix_bits: int
) -> SplitterSet:
    """Contrast partitioner: balance only private cardinalities |R_i|,
    ignoring the public distribution (costs still reported via the cdf)."""
    n = int(r_hist.shape[0])
    if n != 1 << radix_bits:
        raise ConfigurationError("histogram length must be 2^radix_bits")
    if n < t:
        raise ConfigurationError(f"buckets ({n}) must be >= partitions ({t})")
    prefix = np.zeros(n + 1, np.int64)
    np.cumsum(r_hist, out=prefix[1:])
    edge_cdf = _edge_cdf(cdf, dom, radix_bits)

    def seg_cost(a: int, b: int) -> float:
        return float(prefix[b] - prefix[a])

    def batch_costs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return (prefix[b] - prefix[a]).astype(np.float64)

    bounds = _minmax_contiguous(n, t, seg_cost, batch_costs)
    return _splitter_set_from_bounds(bounds, r_hist, prefix, edge_cdf, t, dom, radix_bits)


def _splitter_set_from_bounds(
    bounds: list,
    r_hist: np.ndarray,
    prefix: np.ndarray,
    edge_cdf: np.ndarray,
    t: int,
    dom: KeyDomain,
    radix_bits: int,
) -> SplitterSet:
    n = int(r_hist.shape[0])
    bucket_bounds = np.asarray(bounds, np.int64)
    sizes = prefix[bucket_bounds[1:]] - prefix[bucket_bounds[:-1]]
    costs = np.array(
        [
            split_relevant_cost(
                int(sizes[j]),
                t,
                float(edge_cdf[bucket_bounds[j + 1]] - edge_cdf[bucket_bounds[j]]),
            )
            for j in range(t)
        ]
    )
    splitter_keys = np.array(
        [bucket_lower_key(int(e), dom, radix_bits) for e in bucket_bounds[1:-1]],
        np.uint64,
    )
    vector = SplitterVector.from_bucket_bounds(bounds, n)
    return SplitterSet(splitter_keys, bucket_bounds, vector, sizes.astype(np.int64), costs)
