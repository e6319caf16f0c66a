"""Command-line entry point: ``build``, ``bench``, ``hll-eval`` and ``calibrate``.

Exit codes: 0 on success, 2 on configuration errors, 3 on data errors.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from hybridlsh import bench
from hybridlsh.cost import write_calibration_csv
from hybridlsh.data_io import sample_queries
from hybridlsh.errors import ConfigError, FormatError, InputError
from hybridlsh.tables import build_index, save_index

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _config(args) -> bench.BenchConfig:
    cfg = bench.load_config(args.config) if args.config else bench.BenchConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_build(cfg: bench.BenchConfig, args) -> int:
    """Build the index for the first radius of the grid and save it."""
    data = bench.load_bench_data(cfg)
    r = cfg.radii[0]
    t0 = time.perf_counter()
    index = build_index(data, bench.index_params(cfg, data, r), workers=cfg.workers)
    elapsed = time.perf_counter() - t0
    out = args.out or "index.hlsh"
    save_index(index, out)
    space = index.space()
    print(f"built {index!r} in {elapsed:.2f}s -> {out}")
    print(f"buckets={space['buckets']} sketched={space['sketched_buckets']} "
          f"bucket_bytes={space['bucket_bytes']} sketch_bytes={space['sketch_bytes']}")
    return EXIT_OK


def cmd_bench(cfg: bench.BenchConfig, args) -> int:
    records = [] if args.per_query else None
    rows, _ = bench.run_bench(cfg, timed=args.timed, per_query=records, log=_log)
    out = args.out or "bench.csv"
    bench.write_rows(out, rows, bench.BENCH_FIELDS)
    if records is not None:
        detail = Path(out).with_suffix(".queries.csv")
        bench.write_rows(detail, bench.per_query_rows(records), bench.PER_QUERY_FIELDS)
        _log(f"per-query detail -> {detail}")
    _log(f"{len(rows)} rows -> {out}")
    return EXIT_OK


def cmd_hll_eval(cfg: bench.BenchConfig, args) -> int:
    rows = bench.run_hll_eval(cfg, log=_log)
    out = args.out or "hll_eval.csv"
    bench.write_rows(out, rows, bench.HLL_FIELDS)
    _log(f"{len(rows)} rows -> {out}")
    return EXIT_OK


def cmd_calibrate(cfg: bench.BenchConfig, args) -> int:
    data = bench.load_bench_data(cfg)
    queries, reduced = sample_queries(data, cfg.queries, seed=cfg.seed + 1)
    costs = bench.bench_costs(cfg.replace(costs="calibrate"), reduced, queries)
    out = args.out or "calibration.csv"
    write_calibration_csv(out, costs)
    print(f"alpha={costs.alpha:.4g}ns beta={costs.beta:.4g}ns ratio={costs.ratio:.4g} -> {out}")
    return EXIT_OK


COMMANDS = {"build": cmd_build, "bench": cmd_bench, "hll-eval": cmd_hll_eval, "calibrate": cmd_calibrate}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridlsh-bench", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="key=value config file (defaults apply to missing keys)")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--per-query", action="store_true", help="bench: also write <out>.queries.csv")
    p.add_argument("--timed", action="store_true", help="force single-threaded timing")
    p.add_argument("--out", help="output CSV (the index file for build)")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.seed is not None and args.seed < 0:
        _log("error: --seed must be a non-negative integer")
        return EXIT_CONFIG
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except (FormatError, InputError, OSError) as exc:
        _log(f"data error: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
