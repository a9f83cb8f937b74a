"""Benchmark harness: relation persistence, experiment sweeps, reporting.

The harness is single-threaded; parallelism lives in the engines. Each
configuration point (algorithm x threads x multiplicity x seed x repetition)
produces one flat report row with phase wall times, result values, per-worker
instrumentation, and an oracle-correctness flag.

Relation file format (little-endian throughout):
    bytes 0..8   magic "MPSMREL1"
    bytes 8..16  tuple count n (u64)
    then n records of (key u64, payload u64)
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .core import (
    ConfigurationError,
    FormatError,
    JoinConfig,
    KeyDomain,
    Relation,
)
from .datagen import GenSpec, gen_location_skew, generate, hash_join_oracle
from .engine import run_join

MAGIC = b"MPSMREL1"

EXPERIMENT_DISTRIBUTIONS = ("uniform", "skew8020", "negcorr", "location")

REPORT_COLUMNS = [
    "algorithm",
    "threads",
    "size_r",
    "size_s",
    "multiplicity",
    "distribution",
    "seed",
    "rep",
    "radix_bits",
    "cdf_fanout",
    "role_policy",
    "query_mode",
    "t_sort_public",
    "t_partition",
    "t_sort_private",
    "t_join",
    "t_total",
    "match_count",
    "aggregate_max",
    "correct",
    "tuples_sorted",
    "tuples_scattered",
    "examined_total",
    "examined_max_worker",
    "examined_per_worker",
    "error",
]


def write_relation(rel: Relation, path) -> None:
    """Persist a relation bit-exactly (see module docstring for the layout)."""
    n = rel.cardinality
    interleaved = np.empty(2 * n, dtype="<u8")
    interleaved[0::2] = rel.keys
    interleaved[1::2] = rel.payloads
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint64(n).astype("<u8").tobytes())
        fh.write(interleaved.tobytes())


def read_relation(path) -> Relation:
    """Load a relation, checking magic and exact length."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:8] != MAGIC:
        raise FormatError(f"bad magic in {path!s}", byte_offset=0)
    if len(blob) < 16:
        raise FormatError(f"truncated header in {path!s}", byte_offset=len(blob))
    n = int(np.frombuffer(blob, "<u8", count=1, offset=8)[0])
    expected = 16 + 16 * n
    if len(blob) != expected:
        raise FormatError(
            f"{path!s} declares {n} tuples ({expected} bytes) but has {len(blob)}",
            byte_offset=min(len(blob), expected),
        )
    interleaved = np.frombuffer(blob, "<u8", count=2 * n, offset=16)
    return Relation(interleaved[0::2].copy(), interleaved[1::2].copy())


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment sweep: the cross product of the list-valued axes."""

    algorithms: tuple = ("p-mpsm",)
    threads: tuple = (1,)
    size_r: int = 1 << 16
    multiplicities: tuple = (4,)
    distribution: str = "uniform"
    seeds: tuple = (0,)
    radix_bits: int = 10
    cdf_fanout: int = 4
    role_policy: str = "auto"
    reps: int = 1
    query_mode: str = "aggregate-max"
    check_oracle: bool = True
    pin: bool = False
    key_upper: int = 1 << 32

    def __post_init__(self) -> None:
        for name in ("algorithms", "threads", "multiplicities", "seeds"):
            if not getattr(self, name):
                raise ConfigurationError(f"{name} sweep must be non-empty")
        if self.reps < 1:
            raise ConfigurationError("reps must be >= 1")
        if self.distribution not in EXPERIMENT_DISTRIBUTIONS:
            raise ConfigurationError(
                f"distribution must be one of {EXPERIMENT_DISTRIBUTIONS}"
            )


def _dataset_specs(cfg: ExperimentConfig, mult: int, seed: int) -> tuple:
    dom = KeyDomain(0, cfg.key_upper)
    dist_r, dist_s = {
        "uniform": ("uniform", "uniform"),
        "skew8020": ("skew-80-20-high", "skew-80-20-high"),
        "negcorr": ("skew-80-20-high", "skew-80-20-low"),
        "location": ("uniform", "uniform"),
    }[cfg.distribution]
    # R and S draw from disjoint seed streams derived from the sweep seed
    spec_r = GenSpec(cfg.size_r, dom, dist_r, seed=seed * 2)
    spec_s = GenSpec(cfg.size_r * mult, dom, dist_s, seed=seed * 2 + 1)
    return spec_r, spec_s


def _make_datasets(cfg: ExperimentConfig, mult: int, seed: int, threads: int,
                   load_r=None, load_s=None) -> tuple:
    if load_r is not None and load_s is not None:
        return read_relation(load_r), read_relation(load_s)
    spec_r, spec_s = _dataset_specs(cfg, mult, seed)
    r = generate(spec_r)
    s = generate(spec_s)
    if cfg.distribution == "location":
        s = gen_location_skew(s, threads, seed)
    return r, s


def _base_row(cfg: ExperimentConfig, algo: str, t: int, mult: int, seed: int, rep: int) -> dict:
    return {
        "algorithm": algo,
        "threads": t,
        "size_r": cfg.size_r,
        "size_s": cfg.size_r * mult,
        "multiplicity": mult,
        "distribution": cfg.distribution,
        "seed": seed,
        "rep": rep,
        "radix_bits": cfg.radix_bits,
        "cdf_fanout": cfg.cdf_fanout,
        "role_policy": cfg.role_policy,
        "query_mode": cfg.query_mode,
        "t_sort_public": "",
        "t_partition": "",
        "t_sort_private": "",
        "t_join": "",
        "t_total": "",
        "match_count": "",
        "aggregate_max": "",
        "correct": "",
        "tuples_sorted": "",
        "tuples_scattered": "",
        "examined_total": "",
        "examined_max_worker": "",
        "examined_per_worker": "",
        "error": "",
    }


def run_experiment(
    cfg: ExperimentConfig,
    *,
    load_r=None,
    load_s=None,
    save_r=None,
    save_s=None,
    log=None,
) -> list:
    """Run the sweep and return one report row (dict) per configuration point.

    Infeasible points (e.g. 2^B < T) become rows with the error column set;
    the sweep continues. Oracle results are computed once per dataset.
    """
    _kernels.warmup()
    rows: list = []
    oracle_cache: dict = {}
    for seed in cfg.seeds:
        for mult in cfg.multiplicities:
            for t in cfg.threads:
                try:
                    r, s = _make_datasets(cfg, mult, seed, t, load_r, load_s)
                except (OSError, FormatError) as exc:
                    row = _base_row(cfg, "-", t, mult, seed, 0)
                    row["error"] = str(exc)
                    rows.append(row)
                    continue
                if save_r:
                    write_relation(r, save_r)
                if save_s:
                    write_relation(s, save_s)
                oracle_key = (mult, seed, t if cfg.distribution == "location" else -1)
                expected = None
                if cfg.check_oracle:
                    if oracle_key not in oracle_cache:
                        ref = hash_join_oracle(r, s, "aggregate-max")
                        oracle_cache[oracle_key] = (ref.match_count, ref.aggregate_max)
                    expected = oracle_cache[oracle_key]
                for algo in cfg.algorithms:
                    for rep in range(cfg.reps):
                        row = _base_row(cfg, algo, t, mult, seed, rep)
                        try:
                            jc = JoinConfig(
                                threads=t,
                                radix_bits=cfg.radix_bits,
                                cdf_fanout=cfg.cdf_fanout,
                                algorithm=algo,
                                role_policy=cfg.role_policy,
                                query_mode=cfg.query_mode,
                                key_domain=KeyDomain(0, cfg.key_upper),
                                pin_workers=cfg.pin,
                            )
                            res = run_join(r, s, jc)
                        except ConfigurationError as exc:
                            row["error"] = str(exc)
                            rows.append(row)
                            continue
                        pt = res.phase_timings
                        row["t_sort_public"] = f"{pt.get('sort_public', 0.0):.6f}"
                        row["t_partition"] = f"{pt.get('partition', 0.0):.6f}"
                        row["t_sort_private"] = f"{pt.get('sort_private', 0.0):.6f}"
                        row["t_join"] = f"{pt.get('join', 0.0):.6f}"
                        row["t_total"] = f"{pt['total']:.6f}"
                        row["match_count"] = res.match_count
                        row["aggregate_max"] = "" if res.aggregate_max is None else res.aggregate_max
                        if expected is not None:
                            got = (res.match_count, res.aggregate_max)
                            row["correct"] = got == expected
                        ws = res.worker_stats
                        row["tuples_sorted"] = sum(
                            w.tuples_sorted_public + w.tuples_sorted_private for w in ws
                        )
                        row["tuples_scattered"] = sum(w.tuples_scattered for w in ws)
                        examined = [w.public_tuples_examined for w in ws]
                        row["examined_total"] = sum(examined)
                        row["examined_max_worker"] = max(examined) if examined else 0
                        row["examined_per_worker"] = ";".join(str(e) for e in examined)
                        rows.append(row)
                        if log:
                            log(row)
    return rows


def emit_report(rows: Sequence[dict], fmt: str, path) -> None:
    """Write rows as CSV (fixed header) or JSON (array of flat objects)."""
    if not rows:
        raise ConfigurationError("refusing to emit an empty report")
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: row.get(k, "") for k in REPORT_COLUMNS})
    elif fmt == "json":
        payload = [{k: row.get(k, "") for k in REPORT_COLUMNS} for row in rows]
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1, default=str)
    else:
        raise ConfigurationError(f"unknown report format {fmt!r}")


def _parse_int_list(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _parse_str_list(text: str) -> tuple:
    return tuple(x.strip().lower() for x in text.split(",") if x.strip())


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="mpsm-bench",
        description="Run parallel sort-merge join experiments and report CSV/JSON rows.",
    )
    parser.add_argument("--algo", default="p-mpsm",
                        help="comma list: b-mpsm,p-mpsm,hash-oracle")
    parser.add_argument("--threads", default="1", help="comma list of worker counts")
    parser.add_argument("--size-r", type=int, default=1 << 16, help="|R| (private input size)")
    parser.add_argument("--multiplicity", default="4",
                        help="comma list; |S| = multiplicity * |R|")
    parser.add_argument("--dist", default="uniform", choices=EXPERIMENT_DISTRIBUTIONS)
    parser.add_argument("--seed", default="0", help="comma list of dataset seeds")
    parser.add_argument("--radix-bits", type=int, default=10)
    parser.add_argument("--cdf-fanout", type=int, default=4)
    parser.add_argument("--roles", default="auto", choices=("auto", "r-private", "s-private"))
    parser.add_argument("--reps", type=int, default=1)
    parser.add_argument("--query", default="aggregate-max",
                        choices=("aggregate-max", "count", "materialize"))
    parser.add_argument("--oracle", action="store_true",
                        help="check results against the hash-join oracle")
    parser.add_argument("--pin", action="store_true", help="pin workers to cores (best effort)")
    parser.add_argument("--out", default=None,
                        help="report path (default: $MPSM_OUT_DIR/report.<fmt> or ./report.<fmt>)")
    parser.add_argument("--format", default="csv", choices=("csv", "json"))
    parser.add_argument("--key-upper", type=int, default=1 << 32,
                        help="exclusive key domain upper bound")
    parser.add_argument("--load-r", default=None, help="read R from a relation file")
    parser.add_argument("--load-s", default=None, help="read S from a relation file")
    parser.add_argument("--save-r", default=None, help="persist generated R")
    parser.add_argument("--save-s", default=None, help="persist generated S")
    args = parser.parse_args(argv)

    cfg = ExperimentConfig(
        algorithms=_parse_str_list(args.algo),
        threads=_parse_int_list(args.threads),
        size_r=args.size_r,
        multiplicities=_parse_int_list(args.multiplicity),
        distribution=args.dist,
        seeds=_parse_int_list(args.seed),
        radix_bits=args.radix_bits,
        cdf_fanout=args.cdf_fanout,
        role_policy=args.roles,
        reps=args.reps,
        query_mode=args.query,
        check_oracle=args.oracle,
        pin=args.pin,
        key_upper=args.key_upper,
    )

    def log(row: dict) -> None:
        print(
            f"{row['algorithm']:>11} T={row['threads']:<2} m={row['multiplicity']:<2} "
            f"seed={row['seed']} rep={row['rep']} total={row['t_total']}s "
            f"matches={row['match_count']} correct={row['correct'] or '-'}",
            file=sys.stderr,
        )

    rows = run_experiment(
        cfg,
        load_r=args.load_r,
        load_s=args.load_s,
        save_r=args.save_r,
        save_s=args.save_s,
        log=log,
    )
    out = args.out
    if out is None:
        out_dir = Path(os.environ.get("MPSM_OUT_DIR", "."))
        out_dir.mkdir(parents=True, exist_ok=True)
        out = out_dir / f"report.{args.format}"
    emit_report(rows, args.format, out)
    print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
