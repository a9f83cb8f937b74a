"""Parallel join orchestration for both engine variants.

T worker threads each own one chunk of either input. The basic variant sorts
both inputs chunk-wise and lets every worker merge its private run against
all public runs. The range-partitioned variant first redistributes the
private input by key range (histograms, CDF-balanced splitters, cursor-based
scatter), so each worker touches only ~1/T of every public run during the
join.

Synchronization points: the join never starts before every public run is
sorted; histogram combination and scatter completion each need one barrier.
Private sorting is deliberately not synchronized: a worker proceeds to its
join as soon as its own private run is sorted. Worker threads run JIT
kernels that release the GIL, so they scale across cores.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from threading import Barrier, BrokenBarrierError
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .core import (
    ConfigurationError,
    DomainError,
    JoinConfig,
    JoinResult,
    MaterializeCapExceeded,
    Relation,
    Run,
    WorkerStats,
    validate_relation,
)
from .partition import (
    allocate_partition_arena,
    build_radix_histogram,
    combine_prefix_cursors,
    effective_radix_bits,
    scatter,
)
from .skew import build_cdf, compute_splitters, local_equiheight_bounds
from .sorter import sort_run_with_stats
from .core import chunk as chunk_relation

PhaseHook = Optional[Callable[[int, str], None]]


@dataclass(frozen=True)
class RoleAssignment:
    """Which input plays the private (partitioned) role."""

    private: str  # "r" or "s"

    @property
    def public(self) -> str:
        return "s" if self.private == "r" else "r"

    @property
    def swapped(self) -> bool:
        return self.private == "s"


def choose_roles(n_r: int, n_s: int, policy: str = "auto") -> RoleAssignment:
    """Pick the private input: the smaller relation under 'auto' (ties keep
    the first argument private), or as forced by the policy."""
    if policy == "r-private":
        return RoleAssignment("r")
    if policy == "s-private":
        return RoleAssignment("s")
    if policy != "auto":
        raise ConfigurationError(f"unknown role policy {policy!r}")
    return RoleAssignment("r" if n_r <= n_s else "s")


@dataclass(frozen=True)
class PhaseStep:
    name: str
    barrier_after: bool


@dataclass(frozen=True)
class PhasePlan:
    algorithm: str
    steps: tuple

    def __post_init__(self) -> None:
        names = [s.name for s in self.steps]
        if "join" in names and "sort_public" in names:
            i_pub = names.index("sort_public")
            if not self.steps[i_pub].barrier_after or names.index("join") < i_pub:
                raise ConfigurationError("join must start after the public-sort barrier")


def plan_phases(algorithm: str) -> PhasePlan:
    if algorithm == "b-mpsm":
        return PhasePlan(
            algorithm,
            (
                PhaseStep("sort_public", True),
                PhaseStep("sort_private", False),
                PhaseStep("join", False),
            ),
        )
    if algorithm == "p-mpsm":
        return PhasePlan(
            algorithm,
            (
                PhaseStep("sort_public", True),
                PhaseStep("histogram", True),
                PhaseStep("scatter", True),
                PhaseStep("sort_private", False),
                PhaseStep("join", False),
            ),
        )
    raise ConfigurationError(f"no phase plan for algorithm {algorithm!r}")


def interpolation_search(run, target: int) -> int:
    """Index of the first run element with key >= target (lower bound)."""
    keys = run.keys if isinstance(run, (Run, Relation)) else np.asarray(run, np.uint64)
    idx, _ = _kernels.interp_lower_bound(keys, np.uint64(target))
    return int(idx)


def merge_join(r_run: Run, s_run: Run, s_start: int, emit: Callable[[int, int], None]) -> int:
    """Reference merge join: emit(r_payload, s_payload) once per matching pair.

    Duplicate keys yield the full cross product per key group; the public
    group is located once and rewound for every equal private tuple. Returns
    the number of pairs emitted. The engines use the compiled equivalent;
    this form exists for direct use and cross-checking.
    """
    r_keys, r_pays = r_run.keys, r_run.payloads
    s_keys, s_pays = s_run.keys, s_run.payloads
    nr, ns = len(r_keys), len(s_keys)
    count = 0
    ri, si = 0, s_start
    while ri < nr and si < ns:
        rk = r_keys[ri]
        while si < ns and s_keys[si] < rk:
            si += 1
        if si >= ns:
            break
        sk = s_keys[si]
        if sk > rk:
            ri += 1
            while ri < nr and r_keys[ri] < sk:
                ri += 1
            continue
        s_end = si + 1
        while s_end < ns and s_keys[s_end] == rk:
            s_end += 1
        while ri < nr and r_keys[ri] == rk:
            rp = int(r_pays[ri])
            for t in range(si, s_end):
                emit(rp, int(s_pays[t]))
                count += 1
            ri += 1
        si = s_end
    return count


class _WorkerFailure(Exception):
    pass


def _pin_current_thread(worker: int) -> None:
    try:
        cpus = sorted(os.sched_getaffinity(0))
        os.sched_setaffinity(0, {cpus[worker % len(cpus)]})
    except (AttributeError, OSError):
        pass  # pinning is best-effort; absent on non-Linux hosts


def _prepare(r: Relation, s: Relation, cfg: JoinConfig):
    dom = cfg.key_domain
    for name, rel in (("r", r), ("s", s)):
        report = validate_relation(rel, dom)
        if not report.ok:
            raise DomainError(
                f"relation {name} has {report.violation_count} out-of-domain keys "
                f"(first at index {report.sample_indices[0]})"
            )
    roles = choose_roles(r.cardinality, s.cardinality, cfg.role_policy)
    private, public = (r, s) if roles.private == "r" else (s, r)
    return dom, roles, private, public


def _finalize(
    cfg: JoinConfig,
    roles: RoleAssignment,
    partials: list,
    stats: list,
    timings: dict,
) -> JoinResult:
    count = sum(p[0] for p in partials)
    aggregate = None
    if cfg.query_mode == "aggregate-max" and count > 0:
        aggregate = max(int(p[1]) for p in partials if p[0] > 0)
    materialized = None
    if cfg.query_mode == "materialize":
        if count > cfg.materialize_cap:
            raise MaterializeCapExceeded(
                f"join produced {count} pairs, cap is {cfg.materialize_cap}"
            )
        pieces = [p[2] for p in partials if p[2] is not None and p[2].shape[0]]
        if pieces:
            materialized = np.concatenate(pieces, axis=0)
        else:
            materialized = np.empty((0, 2), np.uint64)
        if roles.swapped:
            materialized = materialized[:, ::-1].copy()
    return JoinResult(
        match_count=int(count),
        aggregate_max=aggregate,
        materialized=materialized,
        phase_timings=timings,
        worker_stats=stats,
    )


def _join_private_run(
    run: Run,
    public_runs: list,
    cfg: JoinConfig,
    stats: WorkerStats,
    worker: int,
):
    """Merge-join one private run against every public run; returns the
    worker's partial (count, best_sum, pairs)."""
    count = 0
    best = 0
    collect = cfg.query_mode == "materialize"
    cap = cfg.materialize_cap
    out_r = out_s = _kernels._EMPTY_U64
    filled = 0
    if collect:
        out_r = np.empty(cap, np.uint64)
        out_s = np.empty(cap, np.uint64)
    if run.cardinality == 0:
        return count, best, (np.empty((0, 2), np.uint64) if collect else None)
    first_key = np.uint64(run.keys[0])
    t = len(public_runs)
    for k in range(t):
        s_run = public_runs[(worker + k) % t]
        if s_run.cardinality == 0:
            continue
        start, probes = _kernels.interp_lower_bound(s_run.keys, first_key)
        stats.probe_tuples_examined += int(probes)
        stats.public_tuples_examined += int(probes)
        c, b, examined, emitted = _kernels.merge_join_run(
            run.keys, run.payloads, s_run.keys, s_run.payloads,
            int(start), collect, out_r[filled:], out_s[filled:],
        )
        stats.public_tuples_examined += int(examined)
        if c > 0:
            stats.s_runs_with_matches += 1
            if count == 0 or int(b) > best:
                best = int(b)
            count += int(c)
            if collect:
                if emitted < c:
                    raise MaterializeCapExceeded(
                        f"worker {worker} exceeded materialize cap {cap}"
                    )
                filled += int(emitted)
    pairs = None
    if collect:
        pairs = np.stack([out_r[:filled], out_s[:filled]], axis=1)
    return count, best, pairs


def run_bmpsm(r: Relation, s: Relation, cfg: JoinConfig, *, phase_hook: PhaseHook = None) -> JoinResult:
    """Basic variant: sort both inputs chunk-wise, then every worker joins its
    private run against all public runs (single barrier after the public sort)."""
    dom, roles, private, public = _prepare(r, s, cfg)
    t = cfg.threads
    pub_chunks = chunk_relation(public, t)
    priv_chunks = chunk_relation(private, t)
    public_runs: list = [None] * t
    stats = [WorkerStats(i) for i in range(t)]
    partials: list = [None] * t
    trip_times: dict = {}
    sort_done = [0.0] * t
    join_done = [0.0] * t

    t0 = time.perf_counter()
    pub_barrier = Barrier(t, action=lambda: trip_times.__setitem__("public", time.perf_counter()))

    def work(i: int) -> None:
        if cfg.pin_workers:
            _pin_current_thread(i)
        st = stats[i]
        if phase_hook:
            phase_hook(i, "sort_public")
        tick = time.perf_counter()
        run_i, _ = sort_run_with_stats(pub_chunks[i].copy(), dom, i)
        st.sort_public_seconds = time.perf_counter() - tick
        st.tuples_sorted_public = run_i.cardinality
        public_runs[i] = run_i
        pub_barrier.wait()
        if phase_hook:
            phase_hook(i, "sort_private")
        tick = time.perf_counter()
        priv_run, srt = sort_run_with_stats(priv_chunks[i].copy(), dom, i)
        sort_done[i] = time.perf_counter()
        st.sort_private_seconds = sort_done[i] - tick
        st.tuples_sorted_private = priv_run.cardinality
        st.heapsort_fallbacks += srt.heapsort_fallbacks
        if phase_hook:
            phase_hook(i, "join")
        tick = time.perf_counter()
        partials[i] = _join_private_run(priv_run, public_runs, cfg, st, i)
        join_done[i] = time.perf_counter()
        st.join_seconds = join_done[i] - tick

    _run_workers(work, t)
    t_end = max(join_done)
    t_pub = trip_times["public"]
    t_sort_priv = max(sort_done)
    timings = {
        "sort_public": t_pub - t0,
        "partition": 0.0,
        "sort_private": t_sort_priv - t_pub,
        "join": t_end - t_sort_priv,
        "total": t_end - t0,
    }
    return _finalize(cfg, roles, partials, stats, timings)


def run_pmpsm(r: Relation, s: Relation, cfg: JoinConfig, *, phase_hook: PhaseHook = None) -> JoinResult:
    """Range-partitioned variant: sort public chunks, build the public CDF and
    private radix histograms, choose cost-balancing splitters, scatter the
    private input into per-worker key ranges, then sort and join per worker."""
    dom, roles, private, public = _prepare(r, s, cfg)
    t = cfg.threads
    bits = effective_radix_bits(dom, cfg.radix_bits)
    if (1 << bits) < t:
        raise ConfigurationError(
            f"effective radix bits {bits} give fewer buckets than {t} workers"
        )
    pub_chunks = chunk_relation(public, t)
    priv_chunks = chunk_relation(private, t)
    public_runs: list = [None] * t
    histograms: list = [None] * t
    stats = [WorkerStats(i) for i in range(t)]
    partials: list = [None] * t
    shared: dict = {}
    trip_times: dict = {}
    sort_done = [0.0] * t
    join_done = [0.0] * t

    def after_public_sort() -> None:
        trip_times["public"] = time.perf_counter()
        bounds = [
            local_equiheight_bounds(public_runs[i], cfg.cdf_fanout, t) for i in range(t)
        ]
        shared["cdf"] = build_cdf(bounds, anchor_key=dom.lower)

    def after_histograms() -> None:
        trip_times["hist"] = time.perf_counter()
        global_hist = np.sum([h.counts for h in histograms], axis=0)
        splitters = compute_splitters(global_hist, shared["cdf"], t, dom, bits)
        cursors = combine_prefix_cursors(histograms, splitters.vector)
        cursors.verify_disjoint()
        shared["splitters"] = splitters
        shared["cursors"] = cursors
        shared["arena"] = allocate_partition_arena(cursors)

    def after_scatter() -> None:
        trip_times["scatter"] = time.perf_counter()

    t0 = time.perf_counter()
    b_public = Barrier(t, action=after_public_sort)
    b_hist = Barrier(t, action=after_histograms)
    b_scatter = Barrier(t, action=after_scatter)

    def work(i: int) -> None:
        if cfg.pin_workers:
            _pin_current_thread(i)
        st = stats[i]
        if phase_hook:
            phase_hook(i, "sort_public")
        tick = time.perf_counter()
        run_i, _ = sort_run_with_stats(pub_chunks[i].copy(), dom, i)
        st.sort_public_seconds = time.perf_counter() - tick
        st.tuples_sorted_public = run_i.cardinality
        public_runs[i] = run_i
        b_public.wait()
        if phase_hook:
            phase_hook(i, "histogram")
        histograms[i] = build_radix_histogram(priv_chunks[i], dom, bits)
        b_hist.wait()
        if phase_hook:
            phase_hook(i, "scatter")
        scatter(priv_chunks[i], i, shared["cursors"], shared["splitters"].vector, dom, shared["arena"])
        st.tuples_scattered = priv_chunks[i].cardinality
        b_scatter.wait()
        if phase_hook:
            phase_hook(i, "sort_private")
        tick = time.perf_counter()
        own = shared["arena"].run_view(i)
        priv_run, srt = sort_run_with_stats(own, dom, i)
        sort_done[i] = time.perf_counter()
        st.sort_private_seconds = sort_done[i] - tick
        st.tuples_sorted_private = priv_run.cardinality
        st.heapsort_fallbacks += srt.heapsort_fallbacks
        if phase_hook:
            phase_hook(i, "join")
        tick = time.perf_counter()
        partials[i] = _join_private_run(priv_run, public_runs, cfg, st, i)
        join_done[i] = time.perf_counter()
        st.join_seconds = join_done[i] - tick

    _run_workers(work, t)
    t_end = max(join_done)
    t_pub = trip_times["public"]
    t_scat = trip_times["scatter"]
    t_sort_priv = max(sort_done)
    timings = {
        "sort_public": t_pub - t0,
        "partition": t_scat - t_pub,
        "sort_private": t_sort_priv - t_scat,
        "join": t_end - t_sort_priv,
        "total": t_end - t0,
    }
    return _finalize(cfg, roles, partials, stats, timings)


def _run_workers(work: Callable[[int], None], t: int) -> None:
    if t == 1:
        work(0)
        return
    with ThreadPoolExecutor(max_workers=t) as pool:
        futures = [pool.submit(work, i) for i in range(t)]
        errors = []
        for f in futures:
            try:
                f.result()
            except Exception as exc:  # noqa: BLE001 - re-raised below
                errors.append(exc)
        if errors:
            # prefer the root cause over secondary broken-barrier noise
            for e in errors:
                if not isinstance(e, BrokenBarrierError):
                    raise e
            raise errors[0]


def run_join(r: Relation, s: Relation, cfg: JoinConfig, *, phase_hook: PhaseHook = None) -> JoinResult:
    """Dispatch on cfg.algorithm (including the hash-join reference)."""
    if cfg.algorithm == "b-mpsm":
        return run_bmpsm(r, s, cfg, phase_hook=phase_hook)
    if cfg.algorithm == "p-mpsm":
        return run_pmpsm(r, s, cfg, phase_hook=phase_hook)
    if cfg.algorithm == "hash-oracle":
        from .datagen import hash_join_oracle

        return hash_join_oracle(r, s, cfg.query_mode, cap=cfg.materialize_cap)
    raise ConfigurationError(f"unknown algorithm {cfg.algorithm!r}")
