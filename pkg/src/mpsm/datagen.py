"""Reproducible dataset generators and the hash-join ground-truth oracle.

All randomness comes from numpy's PCG64 bit generator seeded explicitly, so
identical specs produce bit-identical relations on every platform and run.
Payloads are drawn from [0, 2^32), which keeps payload sums far from uint64
wrap-around (the aggregate contract assumes payloads below 2^63).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ConfigurationError,
    JoinResult,
    KeyDomain,
    MaterializeCapExceeded,
    Relation,
)

DISTRIBUTIONS = (
    "uniform",
    "skew-80-20-high",
    "skew-80-20-low",
    "location-sorted-clusters",
)

PAYLOAD_UPPER = 1 << 32


@dataclass(frozen=True)
class GenSpec:
    """Everything needed to regenerate a relation bit-identically."""

    cardinality: int
    key_domain: KeyDomain
    distribution: str = "uniform"
    seed: int = 0
    location_threads: int = 4  # cluster count for location-sorted-clusters

    def __post_init__(self) -> None:
        if self.cardinality < 0:
            raise ConfigurationError("cardinality must be non-negative")
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigurationError(f"unknown distribution {self.distribution!r}")


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _payloads(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, PAYLOAD_UPPER, n, dtype=np.uint64)


def gen_uniform(spec: GenSpec) -> Relation:
    """Keys i.i.d. uniform over the domain, pseudorandom payloads."""
    rng = _rng(spec.seed)
    keys = rng.integers(spec.key_domain.lower, spec.key_domain.upper, spec.cardinality, dtype=np.uint64)
    return Relation(keys, _payloads(rng, spec.cardinality))


def gen_skewed_8020(spec: GenSpec, direction: str) -> Relation:
    """80% of the keys fall in the 20% tail of the domain (high or low end),
    uniform within each segment."""
    if direction not in ("high", "low"):
        raise ConfigurationError("direction must be 'high' or 'low'")
    dom = spec.key_domain
    rng = _rng(spec.seed)
    n = spec.cardinality
    split = dom.lower + (dom.width * 4) // 5  # hot 20% lives above/below this
    hot = rng.random(n) < 0.8
    keys = np.empty(n, np.uint64)
    n_hot = int(np.count_nonzero(hot))
    if direction == "high":
        keys[hot] = rng.integers(split, dom.upper, n_hot, dtype=np.uint64)
        keys[~hot] = rng.integers(dom.lower, split, n - n_hot, dtype=np.uint64)
    else:
        mirror = dom.lower + dom.width - (dom.width * 4) // 5
        keys[hot] = rng.integers(dom.lower, mirror, n_hot, dtype=np.uint64)
        keys[~hot] = rng.integers(mirror, dom.upper, n - n_hot, dtype=np.uint64)
    return Relation(keys, _payloads(rng, n))


def gen_location_skew(rel: Relation, t: int, seed: int = 0) -> Relation:
    """Reorder a relation so chunk i of t holds the i-th key quantile,
    shuffled within each chunk (clustered but not totally ordered)."""
    if t < 1:
        raise ConfigurationError("t must be >= 1")
    order = np.argsort(rel.keys, kind="stable")
    keys = rel.keys[order].copy()
    pays = rel.payloads[order].copy()
    rng = _rng([seed, 0x10C])
    n = rel.cardinality
    base, rem = divmod(n, t)
    start = 0
    for i in range(t):
        size = base + (1 if i < rem else 0)
        perm = rng.permutation(size)
        keys[start : start + size] = keys[start : start + size][perm]
        pays[start : start + size] = pays[start : start + size][perm]
        start += size
    return Relation(keys, pays)


def generate(spec: GenSpec) -> Relation:
    if spec.distribution == "uniform":
        return gen_uniform(spec)
    if spec.distribution == "skew-80-20-high":
        return gen_skewed_8020(spec, "high")
    if spec.distribution == "skew-80-20-low":
        return gen_skewed_8020(spec, "low")
    if spec.distribution == "location-sorted-clusters":
        base = gen_uniform(spec)
        return gen_location_skew(base, spec.location_threads, spec.seed)
    raise ConfigurationError(f"unknown distribution {spec.distribution!r}")


def hash_join_oracle(
    r: Relation, s: Relation, query_mode: str = "aggregate-max", cap: int | None = None
) -> JoinResult:
    """Single-threaded hash equi-join used as ground truth.

    Builds on the smaller input, probes with the larger. The aggregate is
    max(r.payload + s.payload) over matches, factorized per key as
    (max r payload) + (max s payload); payloads must stay below 2^63 so the
    factorization matches uint64 wrap-free summation.
    """
    import time

    t0 = time.perf_counter()
    for name, rel in (("r", r), ("s", s)):
        if rel.cardinality and int(rel.payloads.max()) >= 1 << 63:
            raise ValueError(f"relation {name} has payloads >= 2^63; aggregate undefined")
    build_is_r = r.cardinality <= s.cardinality
    build, probe = (r, s) if build_is_r else (s, r)
    want_pairs = query_mode == "materialize"
    want_max = query_mode == "aggregate-max"

    table: dict = {}
    if want_pairs:
        for k, p in zip(build.keys.tolist(), build.payloads.tolist()):
            entry = table.get(k)
            if entry is None:
                table[k] = [p]
            else:
                entry.append(p)
    else:
        for k, p in zip(build.keys.tolist(), build.payloads.tolist()):
            entry = table.get(k)
            if entry is None:
                table[k] = (1, p)
            else:
                table[k] = (entry[0] + 1, p if p > entry[1] else entry[1])
    t_build = time.perf_counter() - t0

    count = 0
    best = None
    pairs: list = []
    if want_pairs:
        for k, p in zip(probe.keys.tolist(), probe.payloads.tolist()):
            entry = table.get(k)
            if entry is not None:
                count += len(entry)
                for bp in entry:
                    if want_max:
                        v = bp + p
                        if best is None or v > best:
                            best = v
                    # build side is r when build_is_r: keep (r_payload, s_payload)
                    pairs.append((bp, p) if build_is_r else (p, bp))
                if cap is not None and count > cap:
                    raise MaterializeCapExceeded(f"oracle output exceeds cap {cap}")
    else:
        for k, p in zip(probe.keys.tolist(), probe.payloads.tolist()):
            entry = table.get(k)
            if entry is not None:
                count += entry[0]
                if want_max:
                    v = entry[1] + p
                    if best is None or v > best:
                        best = v
    t_total = time.perf_counter() - t0

    materialized = None
    if want_pairs:
        materialized = (
            np.array(pairs, np.uint64).reshape(-1, 2)
            if pairs
            else np.empty((0, 2), np.uint64)
        )
    return JoinResult(
        match_count=count,
        aggregate_max=(int(best) if (want_max and count > 0) else None),
        materialized=materialized,
        phase_timings={"build": t_build, "join": t_total - t_build, "total": t_total},
        worker_stats=[],
    )
