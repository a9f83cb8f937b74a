"""JIT-compiled hot loops: sorting, radix partitioning, merge joining.

Every kernel is compiled nogil so that worker threads genuinely run in
parallel on separate cores. Keys and payloads travel as two uint64 arrays in
lockstep; all key arithmetic stays in uint64 (subtraction of the domain lower
bound relies on the caller having validated the domain, out-of-range values
wrap and are caught by the bucket guards).
"""

from __future__ import annotations

import numpy as np
from numba import int64, njit, uint64

INSERTION_THRESHOLD = 16

_SIG_OPTS = dict(nogil=True, cache=True)


@njit(**_SIG_OPTS)
def _floor_log2(n):
    l = 0
    m = n
    while m > 1:
        m >>= 1
        l += 1
    return l


@njit(**_SIG_OPTS)
def radix_cluster(keys, pays, lo, hi, lower, shift, nbuckets, bounds):
    """In-place MSD clustering of [lo, hi) by bucket = (key - lower) >> shift.

    bounds must hold nbuckets + 1 slots; on return bounds[k]..bounds[k+1]
    delimit bucket k (absolute offsets). Tuples within a bucket are in no
    particular order. Returns -1, or the index of the first tuple whose
    bucket falls outside [0, nbuckets).
    """
    for k in range(nbuckets + 1):
        bounds[k] = 0
    for i in range(lo, hi):
        b = int64((keys[i] - lower) >> shift)
        if b < 0 or b >= nbuckets:
            return i
        bounds[b + 1] += 1
    for k in range(nbuckets):
        bounds[k + 1] += bounds[k]
    head = np.empty(nbuckets, np.int64)
    for k in range(nbuckets):
        head[k] = lo + bounds[k]
    for k in range(nbuckets):
        end_k = lo + bounds[k + 1]
        i = head[k]
        while i < end_k:
            b = int64((keys[i] - lower) >> shift)
            if b == k:
                i += 1
            else:
                j = head[b]
                tk = keys[i]
                keys[i] = keys[j]
                keys[j] = tk
                tp = pays[i]
                pays[i] = pays[j]
                pays[j] = tp
                head[b] = j + 1
        head[k] = i
    for k in range(nbuckets + 1):
        bounds[k] += lo
    return -1


@njit(**_SIG_OPTS)
def _sift_down(keys, pays, lo, root, length):
    # binary max-heap over keys[lo : lo+length], payloads follow their keys
    while True:
        child = 2 * root + 1
        if child >= length:
            return
        if child + 1 < length and keys[lo + child] < keys[lo + child + 1]:
            child += 1
        if keys[lo + root] >= keys[lo + child]:
            return
        tk = keys[lo + root]
        keys[lo + root] = keys[lo + child]
        keys[lo + child] = tk
        tp = pays[lo + root]
        pays[lo + root] = pays[lo + child]
        pays[lo + child] = tp
        root = child


@njit(**_SIG_OPTS)
def heapsort_range(keys, pays, lo, hi):
    length = hi - lo
    if length < 2:
        return
    for root in range(length // 2 - 1, -1, -1):
        _sift_down(keys, pays, lo, root, length)
    for end in range(length - 1, 0, -1):
        tk = keys[lo]
        keys[lo] = keys[lo + end]
        keys[lo + end] = tk
        tp = pays[lo]
        pays[lo] = pays[lo + end]
        pays[lo + end] = tp
        _sift_down(keys, pays, lo, 0, end)


@njit(**_SIG_OPTS)
def insertion_pass(keys, pays, lo, hi):
    """One guarded left-to-right insertion pass over [lo, hi)."""
    for i in range(lo + 1, hi):
        k = keys[i]
        p = pays[i]
        j = i - 1
        while j >= lo and keys[j] > k:
            keys[j + 1] = keys[j]
            pays[j + 1] = pays[j]
            j -= 1
        keys[j + 1] = k
        pays[j + 1] = p


@njit(**_SIG_OPTS)
def introsort_range(keys, pays, lo, hi):
    """Depth-capped quicksort over [lo, hi) with heapsort fallback.

    Pivot is the median of first/middle/last (Lomuto partition, pivot parked
    at the end). Partitions below INSERTION_THRESHOLD elements are left
    unsorted for a later insertion pass. Once a branch of the recursion
    reaches depth 2*floor(log2(n)) it is finished by heapsort instead.
    Returns the number of heapsort fallbacks taken.
    """
    n = hi - lo
    if n < INSERTION_THRESHOLD:
        return 0
    depth_limit = 2 * _floor_log2(n)
    fallbacks = 0
    # manual stack: (lo, hi, depth); depth <= depth_limit <= 126 bounds it
    stack = np.empty((depth_limit + 8, 3), np.int64)
    top = 0
    stack[top, 0] = lo
    stack[top, 1] = hi
    stack[top, 2] = 0
    top += 1
    while top > 0:
        top -= 1
        a = stack[top, 0]
        b = stack[top, 1]
        d = stack[top, 2]
        while b - a >= INSERTION_THRESHOLD:
            if d >= depth_limit:
                heapsort_range(keys, pays, a, b)
                fallbacks += 1
                break
            # median of first/middle/last, parked at b-1
            mid = a + (b - a) // 2
            ka = keys[a]
            km = keys[mid]
            kz = keys[b - 1]
            if ka <= km:
                if km <= kz:
                    m3 = mid
                elif ka <= kz:
                    m3 = b - 1
                else:
                    m3 = a
            else:
                if ka <= kz:
                    m3 = a
                elif km <= kz:
                    m3 = b - 1
                else:
                    m3 = mid
            if m3 != b - 1:
                tk = keys[m3]
                keys[m3] = keys[b - 1]
                keys[b - 1] = tk
                tp = pays[m3]
                pays[m3] = pays[b - 1]
                pays[b - 1] = tp
            pivot = keys[b - 1]
            store = a
            for j in range(a, b - 1):
                if keys[j] < pivot:
                    tk = keys[j]
                    keys[j] = keys[store]
                    keys[store] = tk
                    tp = pays[j]
                    pays[j] = pays[store]
                    pays[store] = tp
                    store += 1
            tk = keys[store]
            keys[store] = keys[b - 1]
            keys[b - 1] = tk
            tp = pays[store]
            pays[store] = pays[b - 1]
            pays[b - 1] = tp
            d += 1
            # push the larger side, keep iterating on the smaller
            if store - a >= b - store - 1:
                stack[top, 0] = a
                stack[top, 1] = store
                stack[top, 2] = d
                top += 1
                a = store + 1
            else:
                stack[top, 0] = store + 1
                stack[top, 1] = b
                stack[top, 2] = d
                top += 1
                b = store
    return fallbacks


@njit(**_SIG_OPTS)
def three_phase_sort(keys, pays, lo, hi, lower, width_bits):
    """Full run sort: MSD radix pass, per-bucket introsort, insertion pass.

    width_bits is the significant width of (key - lower); the radix pass uses
    its top min(8, width_bits) bits. Returns the heapsort fallback count, or
    -1 if a key fell outside the declared domain.
    """
    n = hi - lo
    if n <= 1:
        return 0
    fallbacks = 0
    eff = width_bits
    if eff > 8:
        eff = 8
    if eff > 0 and n >= INSERTION_THRESHOLD:
        nbuckets = 1 << eff
        shift = uint64(width_bits - eff)
        bounds = np.empty(nbuckets + 1, np.int64)
        bad = radix_cluster(keys, pays, lo, hi, lower, shift, nbuckets, bounds)
        if bad >= 0:
            return -1
        for k in range(nbuckets):
            fallbacks += introsort_range(keys, pays, bounds[k], bounds[k + 1])
    else:
        fallbacks += introsort_range(keys, pays, lo, hi)
    insertion_pass(keys, pays, lo, hi)
    return fallbacks


@njit(**_SIG_OPTS)
def radix_histogram(keys, lower, shift, counts):
    """Count keys per bucket = (key - lower) >> shift.

    Returns -1, or the index of the first out-of-domain key.
    """
    nb = counts.shape[0]
    for i in range(keys.shape[0]):
        b = int64((keys[i] - lower) >> shift)
        if b < 0 or b >= nb:
            return i
        counts[b] += 1
    return -1


@njit(**_SIG_OPTS)
def scatter_chunk(keys, pays, lower, shift, sp, cursors, ends, out_keys, out_pays):
    """Copy every tuple to its partition's next write slot.

    Partition = sp[(key - lower) >> shift]; cursors holds this worker's
    absolute write offsets (one per partition) and advances in place, never
    past ends. No key comparisons; the two table lookups replace them.
    Returns -1 on success, or the index of the first tuple that is
    out-of-domain or would overflow its region.
    """
    nb = sp.shape[0]
    for i in range(keys.shape[0]):
        b = int64((keys[i] - lower) >> shift)
        if b < 0 or b >= nb:
            return i
        j = sp[b]
        pos = cursors[j]
        if pos >= ends[j]:
            return i
        out_keys[pos] = keys[i]
        out_pays[pos] = pays[i]
        cursors[j] = pos + 1
    return -1


@njit(**_SIG_OPTS)
def interp_lower_bound(keys, target):
    """First index whose key is >= target (== binary-search lower bound).

    Probes by the rule of proportion between the window's boundary keys,
    clamped into the window. Any interpolation step that fails to halve the
    window makes the next step bisect instead, so the probe count stays
    O(log n) even on adversarial distributions. Returns (index, positions
    examined).
    """
    lo = 0
    hi = keys.shape[0]
    probes = 0
    bisect_next = False
    while lo < hi:
        width = hi - lo
        if width == 1:
            probes += 1
            if keys[lo] < target:
                lo += 1
            else:
                hi = lo
            break
        klo = keys[lo]
        khi = keys[hi - 1]
        probes += 2
        if klo >= target:
            hi = lo
            break
        if khi < target:
            lo = hi
            break
        # klo < target <= khi, so the answer is in (lo, hi-1]
        if bisect_next or khi == klo:
            pos = lo + width // 2
            was_interp = False
        else:
            frac = float(target - klo) / float(khi - klo)
            pos = lo + int64(frac * float(width - 1))
            if pos <= lo:
                pos = lo + 1
            if pos > hi - 1:
                pos = hi - 1
            was_interp = True
        probes += 1
        if keys[pos] < target:
            lo = pos + 1
        else:
            hi = pos
        bisect_next = was_interp and (2 * (hi - lo) > width)
    return lo, probes


@njit(**_SIG_OPTS)
def merge_join_run(r_keys, r_pays, s_keys, s_pays, s_start, collect, out_r, out_s):
    """Merge join one sorted private run against one sorted public run.

    Starts the public scan at s_start (the caller's lower bound for the first
    private key). Duplicate keys on both sides yield the full per-key cross
    product: the public key group is located once and re-read for each equal
    private tuple (mark and rewind). The scan ends once the private run is
    exhausted, i.e. as soon as the public key exceeds the private maximum.

    Returns (match_count, best_sum, examined, emitted) where examined counts
    the distinct public positions read (the scanned window plus the overshoot
    position; rewound group re-reads touch no new position), best_sum is the
    max of uint64 payload sums (valid only when match_count > 0), and emitted
    is how many pairs were stored in out_r/out_s when collect is set (storage
    stops silently at capacity; match_count keeps counting).
    """
    nr = r_keys.shape[0]
    ns = s_keys.shape[0]
    cap = out_r.shape[0]
    count = int64(0)
    best = uint64(0)
    emitted = int64(0)
    ri = int64(0)
    si = int64(s_start)
    frontier = int64(s_start) - 1  # highest public index read so far
    while ri < nr and si < ns:
        rk = r_keys[ri]
        while si < ns:
            if si > frontier:
                frontier = si
            if s_keys[si] < rk:
                si += 1
            else:
                break
        if si >= ns:
            break
        sk = s_keys[si]
        if sk > rk:
            ri += 1
            while ri < nr and r_keys[ri] < sk:
                ri += 1
            continue
        # sk == rk: delimit the public key group [si, s_end)
        s_end = si + 1
        while s_end < ns:
            if s_end > frontier:
                frontier = s_end
            if s_keys[s_end] == rk:
                s_end += 1
            else:
                break
        while ri < nr and r_keys[ri] == rk:
            rp = r_pays[ri]
            for t in range(si, s_end):
                v = rp + s_pays[t]
                if count == 0 or v > best:
                    best = v
                count += 1
                if collect and emitted < cap:
                    out_r[emitted] = rp
                    out_s[emitted] = s_pays[t]
                    emitted += 1
            ri += 1
        si = s_end
    examined = frontier - s_start + 1
    if examined < 0:
        examined = 0
    return count, best, examined, emitted


_EMPTY_U64 = np.empty(0, np.uint64)


def warmup() -> None:
    """Compile every kernel on tiny inputs (cached to disk afterwards)."""
    keys = np.array([3, 1, 2, 1], dtype=np.uint64)
    pays = np.array([30, 10, 20, 11], dtype=np.uint64)
    bounds = np.empty(5, np.int64)
    radix_cluster(keys.copy(), pays.copy(), 0, 4, np.uint64(0), np.uint64(0), 4, bounds)
    heapsort_range(keys.copy(), pays.copy(), 0, 4)
    insertion_pass(keys.copy(), pays.copy(), 0, 4)
    big_k = np.arange(64, dtype=np.uint64)[::-1].copy()
    big_p = np.arange(64, dtype=np.uint64)
    introsort_range(big_k, big_p, 0, 64)
    three_phase_sort(keys.copy(), pays.copy(), 0, 4, np.uint64(0), 2)
    counts = np.zeros(4, np.int64)
    radix_histogram(keys, np.uint64(0), np.uint64(0), counts)
    sp = np.zeros(4, np.int64)
    cur = np.zeros(1, np.int64)
    ends = np.full(1, 4, np.int64)
    scatter_chunk(keys, pays, np.uint64(0), np.uint64(0), sp,
                  cur, ends, np.empty(4, np.uint64), np.empty(4, np.uint64))
    srt = np.array([1, 1, 2, 3], dtype=np.uint64)
    interp_lower_bound(srt, np.uint64(2))
    merge_join_run(srt, pays, srt, pays, 0, False, _EMPTY_U64, _EMPTY_U64)
    merge_join_run(srt, pays, srt, pays, 0, True,
                   np.empty(8, np.uint64), np.empty(8, np.uint64))
