import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpsm import ConfigurationError, KeyDomain, Relation, Run
from mpsm.partition import bucket_lower_key
from mpsm.skew import (
    Cdf,
    build_cdf,
    cdf_eval,
    compute_size_balanced_splitters,
    compute_splitters,
    local_equiheight_bounds,
    split_relevant_cost,
)
from mpsm.sorter import sort_run


def make_run(keys, origin=0):
    keys = np.sort(np.asarray(keys, np.uint64))
    return Run(keys, keys.copy(), origin)


class TestLocalBounds:
    def test_exact_quartiles(self):
        run = make_run(range(1, 9))
        lb = local_equiheight_bounds(run, f=2, t=2)
        assert lb.bound_keys.tolist() == [2, 4, 6, 8]
        assert lb.run_size == 8 and lb.weight_per_bound == 2.0

    def test_single_tuple_clamps(self):
        run = make_run([17])
        lb = local_equiheight_bounds(run, f=4, t=1)
        assert lb.bound_keys.tolist() == [17, 17, 17, 17]

    def test_empty_run(self):
        lb = local_equiheight_bounds(make_run([]), f=4, t=2)
        assert lb.n_bounds == 0 and lb.run_size == 0

    def test_rank_deviation_below_one(self):
        # oracle: exact rank of each bound by position counting
        rng = np.random.default_rng(5)
        keys = np.unique(rng.integers(0, 1 << 48, 120_000, dtype=np.uint64))[:100_000]
        run = make_run(keys)
        k = 8
        lb = local_equiheight_bounds(run, f=4, t=2)
        n = run.cardinality
        for m, bound in enumerate(lb.bound_keys.tolist(), start=1):
            rank = int(np.searchsorted(run.keys, np.uint64(bound), side="right"))
            target = n * m / k
            assert abs(rank - target) < 1


class TestCdf:
    def test_single_run_identity(self):
        lb = local_equiheight_bounds(make_run(range(1, 9)), f=4, t=1)
        cdf = build_cdf([lb])
        assert cdf.step_keys.tolist() == [2, 4, 6, 8]
        assert cdf.step_cum.tolist() == [2.0, 4.0, 6.0, 8.0]
        assert cdf.total == 8

    def test_two_identical_runs_double_heights(self):
        lbs = [
            local_equiheight_bounds(make_run(range(1, 9)), f=2, t=2),
            local_equiheight_bounds(make_run(range(1, 9)), f=2, t=2),
        ]
        cdf = build_cdf(lbs)
        assert cdf.step_keys.tolist() == [2, 4, 6, 8]
        assert cdf.step_cum.tolist() == [4.0, 8.0, 12.0, 16.0]

    def test_eval_linear_midpoint(self):
        cdf = Cdf(np.array([2, 4, 6, 8], np.uint64), np.array([2.0, 4.0, 6.0, 8.0]), 8)
        assert cdf_eval(cdf, 5) == pytest.approx(5.0)

    def test_eval_below_first_step(self):
        cdf = Cdf(np.array([4, 8], np.uint64), np.array([4.0, 8.0]), 8)
        v = cdf_eval(cdf, 1)
        assert 0.0 <= v < 4.0
        assert cdf_eval(cdf, 0) == 0.0

    def test_eval_exact_step_key(self):
        cdf = Cdf(np.array([2, 4, 6, 8], np.uint64), np.array([2.0, 4.0, 6.0, 8.0]), 8)
        for key, cum in ((2, 2.0), (4, 4.0), (8, 8.0)):
            assert cdf_eval(cdf, key) == cum

    def test_eval_above_last(self):
        cdf = Cdf(np.array([2, 4], np.uint64), np.array([2.0, 4.0]), 4)
        assert cdf_eval(cdf, 100) == 4.0

    def test_eval_many_matches_scalar(self):
        rng = np.random.default_rng(6)
        lbs = [
            local_equiheight_bounds(make_run(rng.integers(0, 1000, 500)), f=4, t=4)
            for _ in range(4)
        ]
        cdf = build_cdf(lbs, anchor_key=0)
        probes = rng.integers(0, 1200, 64, dtype=np.uint64)
        batch = cdf.eval_many(probes)
        for p, want in zip(probes.tolist(), batch.tolist()):
            assert cdf_eval(cdf, p) == pytest.approx(want)

    def test_accuracy_against_exact_ranks(self):
        # oracle: exact global rank by counting over all runs
        rng = np.random.default_rng(7)
        f, t = 4, 4
        runs = []
        for i in range(t):
            raw = rng.integers(0, 1 << 20, 10_000, dtype=np.uint64)
            raw = (raw * raw) >> np.uint64(20)  # squared: skewed toward small keys
            runs.append(make_run(raw, i))
        lbs = [local_equiheight_bounds(r, f, t) for r in runs]
        cdf = build_cdf(lbs, anchor_key=0)
        total = sum(r.cardinality for r in runs)
        tolerance = total / (f * t) + t
        probes = rng.integers(0, 1 << 20, 64, dtype=np.uint64)
        for p in probes.tolist():
            exact = sum(int(np.searchsorted(r.keys, np.uint64(p), side="right")) for r in runs)
            assert abs(cdf_eval(cdf, p) - exact) <= tolerance

    def test_strictly_increasing_cumulative(self):
        rng = np.random.default_rng(8)
        lbs = [
            local_equiheight_bounds(make_run(rng.integers(0, 100, 64)), f=2, t=4)
            for _ in range(4)
        ]
        cdf = build_cdf(lbs)
        assert np.all(np.diff(cdf.step_cum) > 0)
        assert np.all(np.diff(cdf.step_keys.astype(np.int64)) >= 0)
        assert cdf.step_cum[-1] == pytest.approx(cdf.total)

    def test_doubling_f_does_not_hurt(self):
        # statistical check over several seeds: max rank error is monotone in f
        t = 4
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            runs = [make_run(rng.integers(0, 1 << 16, 5_000, dtype=np.uint64)) for _ in range(t)]
            probes = rng.integers(0, 1 << 16, 128, dtype=np.uint64)

            def max_err(f):
                cdf = build_cdf([local_equiheight_bounds(r, f, t) for r in runs])
                err = 0.0
                for p in probes.tolist():
                    exact = sum(
                        int(np.searchsorted(r.keys, np.uint64(p), side="right")) for r in runs
                    )
                    err = max(err, abs(cdf.eval(p) - exact))
                return err

            assert max_err(8) <= max_err(4) + 1e-9


class TestSplitCost:
    def test_empty_partition_convention(self):
        assert split_relevant_cost(0, 4, 100.0) == 100.0

    def test_formula(self):
        assert split_relevant_cost(8, 4, 100.0) == pytest.approx(8 * 3 + 32 + 100)

    def test_log2_of_one(self):
        assert split_relevant_cost(1, 1, 0.0) == pytest.approx(1.0)

    def test_negative_span_rejected(self):
        with pytest.raises(ValueError):
            split_relevant_cost(1, 1, -1.0)


def brute_force_splitters(r_hist, cdf, t, dom, bits):
    """Exhaustive oracle: enumerate every contiguous assignment of buckets to
    t partitions (each at least one bucket), minimize the max cost, break ties
    toward the lexicographically smallest boundary tuple."""
    n = len(r_hist)
    prefix = np.concatenate([[0], np.cumsum(r_hist)])
    edges = [
        cdf.eval(min(bucket_lower_key(e, dom, bits), (1 << 64) - 1)) for e in range(n + 1)
    ]

    def cost(a, b):
        size = int(prefix[b] - prefix[a])
        return split_relevant_cost(size, t, edges[b] - edges[a])

    best_cost, best_bounds = None, None
    for cuts in itertools.combinations(range(1, n), t - 1):
        bounds = (0,) + cuts + (n,)
        cmax = max(cost(bounds[j], bounds[j + 1]) for j in range(t))
        if best_cost is None or cmax < best_cost - 1e-12 or (
            abs(cmax - best_cost) <= 1e-12 and bounds < best_bounds
        ):
            best_cost, best_bounds = cmax, bounds
    return best_cost, best_bounds


class TestComputeSplitters:
    def test_correlated_skew_splits_at_eight(self):
        # private histogram [7,3,3,1] over a [0,32) domain, public side with
        # the same skew: the lone splitter must land on key 8 (7 vs 7 tuples)
        dom = KeyDomain(0, 32)
        r_hist = np.array([7, 3, 3, 1], np.int64)
        s_keys = [0, 3, 9, 1, 16, 7, 21, 4, 12, 8, 5, 26, 18, 6]
        s_run = make_run(s_keys)
        cdf = build_cdf([local_equiheight_bounds(s_run, f=4, t=2)], anchor_key=0)
        ss = compute_splitters(r_hist, cdf, t=2, dom=dom, radix_bits=2)
        assert ss.splitter_keys.tolist() == [8]
        assert ss.partition_sizes.tolist() == [7, 7]
        assert ss.vector.sp.tolist() == [0, 1, 1, 1]

    def test_uniform_symmetry(self):
        dom = KeyDomain(0, 32)
        r_hist = np.array([5, 5, 5, 5], np.int64)
        cdf = Cdf(np.array([8, 16, 24, 32], np.uint64), np.array([5.0, 10.0, 15.0, 20.0]), 20)
        ss = compute_splitters(r_hist, cdf, t=4, dom=dom, radix_bits=2)
        assert ss.bucket_bounds.tolist() == [0, 1, 2, 3, 4]
        assert ss.partition_sizes.tolist() == [5, 5, 5, 5]

    def test_too_few_buckets_rejected(self):
        with pytest.raises(ConfigurationError):
            compute_splitters(
                np.array([1, 1], np.int64), Cdf(np.empty(0, np.uint64), np.empty(0), 0),
                t=4, dom=KeyDomain(0, 32), radix_bits=1,
            )

    def test_empty_partitions_allowed(self):
        # fewer nonempty buckets than partitions: sizes may be zero but the
        # boundaries stay strictly increasing
        dom = KeyDomain(0, 32)
        r_hist = np.array([10, 0, 0, 0], np.int64)
        cdf = Cdf(np.empty(0, np.uint64), np.empty(0), 0)
        ss = compute_splitters(r_hist, cdf, t=3, dom=dom, radix_bits=2)
        assert np.all(np.diff(ss.bucket_bounds) >= 1)
        assert np.all(np.diff(ss.splitter_keys.astype(np.int64)) > 0)
        assert sorted(ss.partition_sizes.tolist()) == [0, 0, 10]

    @given(
        bits=st.integers(2, 6),
        t=st.integers(1, 4),
        seed=st.integers(0, 2**16),
    )
    @settings(max_examples=60, deadline=None)
    def test_matches_brute_force(self, bits, t, seed):
        n = 1 << bits
        rng = np.random.default_rng(seed)
        dom = KeyDomain(0, 1 << 16)
        r_hist = rng.integers(0, 50, n).astype(np.int64)
        s_keys = rng.integers(0, 1 << 16, 200, dtype=np.uint64)
        cdf = build_cdf([local_equiheight_bounds(make_run(s_keys), f=4, t=t)], anchor_key=0)
        ss = compute_splitters(r_hist, cdf, t, dom, bits)
        want_cost, want_bounds = brute_force_splitters(r_hist.tolist(), cdf, t, dom, bits)
        assert ss.max_cost == pytest.approx(want_cost, rel=1e-12)
        assert tuple(ss.bucket_bounds.tolist()) == want_bounds

    def test_uniform_sizes_within_one_bucket(self):
        rng = np.random.default_rng(9)
        dom = KeyDomain(0, 1 << 16)
        bits = 6
        r_hist = rng.integers(40, 60, 1 << bits).astype(np.int64)
        s_keys = rng.integers(0, 1 << 16, 4000, dtype=np.uint64)
        cdf = build_cdf([local_equiheight_bounds(make_run(s_keys), f=4, t=4)])
        ss = compute_splitters(r_hist, cdf, 4, dom, bits)
        spread = int(ss.partition_sizes.max() - ss.partition_sizes.min())
        assert spread <= int(r_hist.max())


class TestSizeBalancedContrast:
    def test_ignores_public_side(self):
        dom = KeyDomain(0, 32)
        r_hist = np.array([7, 3, 3, 1], np.int64)
        # public data heavily at the top: cost-balanced and size-balanced differ
        cdf = Cdf(np.array([28, 30, 31], np.uint64), np.array([50.0, 100.0, 150.0]), 150)
        size_ss = compute_size_balanced_splitters(r_hist, cdf, 2, dom, 2)
        assert size_ss.partition_sizes.tolist() == [7, 7]
        cost_ss = compute_splitters(r_hist, cdf, 2, dom, 2)
        assert cost_ss.max_cost <= size_ss.max_cost
