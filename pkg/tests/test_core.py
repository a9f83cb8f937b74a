import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpsm import (
    ConfigurationError,
    JoinConfig,
    KeyDomain,
    Relation,
    Run,
    Tuple64,
    chunk,
    validate_relation,
)


class TestKeyDomain:
    def test_width_bits(self):
        assert KeyDomain(0, 32).width_bits == 5
        assert KeyDomain(0, 33).width_bits == 6
        assert KeyDomain(0, 1).width_bits == 0
        assert KeyDomain(5, 6).width_bits == 0
        assert KeyDomain(0, 1 << 32).width_bits == 32
        assert KeyDomain(100, 132).width_bits == 5

    def test_rejects_bad_bounds(self):
        with pytest.raises(ConfigurationError):
            KeyDomain(5, 5)
        with pytest.raises(ConfigurationError):
            KeyDomain(6, 5)
        with pytest.raises(ConfigurationError):
            KeyDomain(-1, 5)
        with pytest.raises(ConfigurationError):
            KeyDomain(0, (1 << 64) + 1)


class TestValidateRelation:
    def test_empty_relation_valid(self):
        report = validate_relation(Relation.empty(), KeyDomain(0, 1 << 32))
        assert report.ok and report.violation_count == 0

    def test_boundary_keys(self):
        rel = Relation.from_tuples([(0, 1), ((1 << 32) - 1, 2)])
        assert validate_relation(rel, KeyDomain(0, 1 << 32)).ok

    def test_exclusive_upper_bound(self):
        rel = Relation.from_tuples([(1 << 32, 1)])
        report = validate_relation(rel, KeyDomain(0, 1 << 32))
        assert report.violation_count == 1
        assert report.sample_indices == (0,)

    def test_below_lower_bound(self):
        rel = Relation.from_tuples([(99, 1), (100, 2)])
        report = validate_relation(rel, KeyDomain(100, 132))
        assert report.violation_count == 1


class TestChunk:
    def test_remainder_to_lowest_workers(self):
        rel = Relation.from_tuples([(i, i) for i in range(7)])
        parts = chunk(rel, 2)
        assert [len(c) for c in parts] == [4, 3]

    def test_even_split(self):
        rel = Relation.from_tuples([(i, i) for i in range(8)])
        assert [len(c) for c in chunk(rel, 4)] == [2, 2, 2, 2]

    def test_empty_relation(self):
        parts = chunk(Relation.empty(), 3)
        assert [len(c) for c in parts] == [0, 0, 0]

    def test_zero_chunks_rejected(self):
        with pytest.raises(ConfigurationError):
            chunk(Relation.empty(), 0)

    @given(n=st.integers(0, 200), t=st.integers(1, 9), seed=st.integers(0, 2**16))
    @settings(max_examples=60, deadline=None)
    def test_concat_is_identity(self, n, t, seed):
        rng = np.random.default_rng(seed)
        rel = Relation(
            rng.integers(0, 1 << 20, n, dtype=np.uint64),
            rng.integers(0, 1 << 20, n, dtype=np.uint64),
        )
        parts = chunk(rel, t)
        assert len(parts) == t
        sizes = [len(c) for c in parts]
        assert max(sizes) - min(sizes) <= 1
        back_k = np.concatenate([c.keys for c in parts]) if parts else rel.keys
        back_p = np.concatenate([c.payloads for c in parts])
        assert np.array_equal(back_k, rel.keys)
        assert np.array_equal(back_p, rel.payloads)


class TestJoinConfig:
    def test_defaults_valid(self):
        cfg = JoinConfig()
        assert cfg.radix_bits == 10 and cfg.cdf_fanout == 4

    def test_radix_bits_must_cover_threads(self):
        with pytest.raises(ConfigurationError):
            JoinConfig(threads=4, radix_bits=1)
        JoinConfig(threads=4, radix_bits=2)  # 2^2 == 4 workers is allowed

    def test_bad_values(self):
        with pytest.raises(ConfigurationError):
            JoinConfig(threads=0)
        with pytest.raises(ConfigurationError):
            JoinConfig(cdf_fanout=0)
        with pytest.raises(ConfigurationError):
            JoinConfig(algorithm="nested-loop")
        with pytest.raises(ConfigurationError):
            JoinConfig(role_policy="coin-flip")
        with pytest.raises(ConfigurationError):
            JoinConfig(query_mode="sum")


class TestRelationAndRun:
    def test_tuple_round_trip(self):
        rel = Relation.from_tuples([(3, 30), (1, 10)])
        assert rel.tuple_at(0) == Tuple64(3, 30)
        assert list(rel) == [Tuple64(3, 30), Tuple64(1, 10)]

    def test_run_requires_sorted_keys(self):
        with pytest.raises(ValueError):
            Run(np.array([2, 1], np.uint64), np.array([0, 0], np.uint64))
        run = Run(np.array([1, 1, 2], np.uint64), np.array([5, 6, 7], np.uint64), origin_worker=3)
        assert run.origin_worker == 3 and run.cardinality == 3

    def test_mismatched_columns_rejected(self):
        with pytest.raises(ValueError):
            Relation(np.zeros(2, np.uint64), np.zeros(3, np.uint64))
