"""Benchmark harness: configuration, the three-mode query protocol and CSV output.

A run removes ``queries`` random points from the dataset to serve as
queries, then for every radius builds an index, runs hybrid, LSH-only and
linear-only search over all queries ``repetitions`` times and aggregates
one :class:`BenchRow` per (radius, mode).

Timing protocol: an untimed pass precedes the timed ones as warm-up.  Each
query then runs under all three modes back to back, so the modes being
compared share the machine's state at that moment; the order cycles through
all permutations with query and repetition, balancing which mode runs on a
cache warmed by which.
Per-query times are the median over repetitions.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hybridlsh.cost import CostParams, Strategy, calibrate
from hybridlsh.data_io import (
    ClusterSpec,
    SyntheticSpec,
    bimodal_spec,
    generate_synthetic,
    load_bits,
    load_dense,
    load_sparse,
    sample_queries,
)
from hybridlsh.errors import ConfigError, InputError
from hybridlsh.metrics import Dataset, Metric
from hybridlsh.oracle import GroundTruth, GroundTruthCache, exact_candidate_stats, recall
from hybridlsh.query import MODES, QueryContext, QueryReport, estimate_from_buckets, execute_query
from hybridlsh.tables import HybridIndex, IndexParams, build_index

__all__ = [
    "BenchConfig",
    "BenchRow",
    "parse_config",
    "load_config",
    "load_bench_data",
    "bench_costs",
    "index_params",
    "run_bench",
    "run_hll_eval",
    "HllEvalRow",
    "write_rows",
    "TIMING_FIELDS",
]

SYNTHETIC = ("bimodal", "clusters", "uniform")
_EXTENSIONS = {".csv": "dense", ".svm": "sparse", ".libsvm": "sparse", ".hex": "bits", ".bits": "bits"}


@dataclass
class BenchConfig:
    """Everything a bench run needs; mirrors the ``key=value`` config file.

    ``dataset`` is one of the synthetic generators (``bimodal``, ``clusters``,
    ``uniform``) or a path to a data file in ``data_format``.  ``costs`` is
    ``calibrate``, ``preset`` or an explicit ``alpha,beta`` pair.  Zero for
    ``k``, ``w_factor`` and ``hll_threshold`` means "derive the default".
    """

    dataset: str = "bimodal"
    data_format: str = ""
    metric: str = "l2"
    n: int = 100_000
    d: int = 32
    dense_fraction: float = 0.7
    scale: float = 0.05
    n_clusters: int = 10
    fingerprint_bits: int = 64
    radii: tuple = (0.2, 0.28, 0.4, 0.57, 0.8, 1.13)
    L: int = 50
    m: int = 128
    delta: float = 0.1
    k: int = 0
    w_factor: float = 0.0
    hll_threshold: int = 0
    costs: str = "calibrate"
    calibration_points: int = 10_000
    calibration_queries: int = 100
    calibration_trials: int = 5
    queries: int = 100
    repetitions: int = 5
    seed: int = 0
    workers: int = 1
    gt_cache: str = ""

    def __post_init__(self):
        self.radii = tuple(float(r) for r in self.radii)
        self.validate()

    def validate(self) -> None:
        if not self.radii or any(not r > 0 for r in self.radii):
            raise ConfigError(f"radii must be a non-empty list of positive values, got {self.radii}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.queries < 0 or self.L < 1 or self.workers < 1:
            raise ConfigError("queries must be >= 0, L and workers >= 1")
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.k < 0 or self.w_factor < 0 or self.hll_threshold < 0:
            raise ConfigError("k, w_factor and hll_threshold must be >= 0 (0 = default)")
        if self.metric:
            try:
                Metric.parse(self.metric)
            except InputError as exc:
                raise ConfigError(str(exc)) from None
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")
        if self.costs not in ("calibrate", "preset"):
            _explicit_costs(self.costs)
        if self.dataset in SYNTHETIC:
            if not 0 <= self.dense_fraction <= 1:
                raise ConfigError("dense_fraction must lie in [0, 1]")
        elif not (self.data_format or Path(self.dataset).suffix in _EXTENSIONS):
            raise ConfigError(f"cannot tell the format of {self.dataset!r}; set data_format")
        if self.data_format not in ("", "dense", "sparse", "bits"):
            raise ConfigError(f"unknown data_format {self.data_format!r}")

    def replace(self, **changes) -> "BenchConfig":
        return dataclasses.replace(self, **changes)


def _explicit_costs(text: str) -> tuple[float, float]:
    try:
        alpha, beta = (float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"costs must be calibrate, preset or 'alpha,beta', got {text!r}") from None
    CostParams(alpha, beta)
    return alpha, beta


def _convert(name: str, raw: str, default):
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(x) for x in raw.replace(" ", "").split(",") if x)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


def parse_config(text: str, base: BenchConfig | None = None) -> BenchConfig:
    """Parse ``key=value`` lines (``#`` starts a comment) over ``base``."""
    base = base or BenchConfig()
    defaults = {f.name: getattr(base, f.name) for f in dataclasses.fields(BenchConfig)}
    values = dict(defaults)
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw, defaults[key])
    return BenchConfig(**values)


def load_config(path) -> BenchConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def load_bench_data(cfg: BenchConfig) -> Dataset:
    if cfg.dataset == "bimodal":
        spec = bimodal_spec(cfg.n, cfg.d, cfg.dense_fraction, cfg.scale, cfg.seed, cfg.metric)
        spec = dataclasses.replace(spec, fingerprint_bits=cfg.fingerprint_bits)
    elif cfg.dataset == "clusters":
        per = int(cfg.n * cfg.dense_fraction) // max(1, cfg.n_clusters)
        clusters = tuple(ClusterSpec(per, cfg.scale) for _ in range(cfg.n_clusters))
        spec = SyntheticSpec(cfg.n, cfg.d, clusters, cfg.seed, cfg.metric, cfg.fingerprint_bits)
    elif cfg.dataset == "uniform":
        spec = SyntheticSpec(cfg.n, cfg.d, (), cfg.seed, cfg.metric, cfg.fingerprint_bits)
    else:
        fmt = cfg.data_format or _EXTENSIONS[Path(cfg.dataset).suffix]
        if fmt == "sparse":
            return load_sparse(cfg.dataset, cfg.metric or "cosine")
        if fmt == "dense":
            return load_dense(cfg.dataset, cfg.metric or "l2")
        return load_bits(cfg.dataset)
    return generate_synthetic(spec)[0]


def index_params(cfg: BenchConfig, data: Dataset, r: float, seed: int | None = None) -> IndexParams:
    try:
        return IndexParams.for_metric(
            data.metric, data.d, r, L=cfg.L, delta=cfg.delta, m=cfg.m, k=cfg.k or None,
            w_factor=cfg.w_factor or None, seed=(cfg.seed if seed is None else seed) % 2**64,
            hll_threshold=cfg.hll_threshold or None)
    except InputError as exc:
        # e.g. a radius outside the metric's range
        raise ConfigError(f"radius {r:g}: {exc}") from None


def bench_costs(cfg: BenchConfig, reduced: Dataset, queries: Dataset) -> CostParams:
    """Cost parameters as the config asks: calibrated on a sample, the preset, or explicit."""
    if cfg.costs == "preset":
        return CostParams.preset(reduced.metric)
    if cfg.costs == "calibrate":
        rng = np.random.default_rng(cfg.seed + 7)
        size = min(cfg.calibration_points, reduced.n)
        sample = reduced.subset(np.sort(rng.choice(reduced.n, size=size, replace=False)))
        qsample = [queries.point(i) for i in range(min(cfg.calibration_queries, queries.n))]
        return calibrate(sample, qsample, trials=cfg.calibration_trials, seed=cfg.seed)
    alpha, beta = _explicit_costs(cfg.costs)
    return CostParams(alpha, beta, reduced.metric)


# -- bench ---------------------------------------------------------------------------

@dataclass
class BenchRow:
    dataset: str
    metric: str
    r: float
    mode: str
    k: int
    n: int
    n_queries: int
    mean_query_ns: float
    median_query_ns: float
    recall_mean: float
    linear_call_fraction: float
    hll_rel_error_mean: float
    hll_cost_fraction: float
    collisions_mean: float
    cand_exact_mean: float
    cand_est_mean: float
    decision_agreement: float
    seed: int


BENCH_FIELDS = [f.name for f in dataclasses.fields(BenchRow)]
# columns that depend on wall-clock measurements; everything else is fixed by the seed
TIMING_FIELDS = {"mean_query_ns", "median_query_ns", "hll_cost_fraction", "decision_agreement"}


def _run_pass(index, queries, costs, mode, r, contexts, workers) -> list[QueryReport]:
    def one(i, ctx):
        return execute_query(index, queries.point(i), costs, mode=mode, r=r, ctx=ctx, query_id=i)

    return _parallel(queries.n, contexts, workers, one)


def _parallel(count, contexts, workers, fn):
    if workers == 1:
        return [fn(i, contexts[0]) for i in range(count)]
    chunks = np.array_split(np.arange(count), workers)
    with ThreadPoolExecutor(workers) as pool:
        parts = pool.map(lambda c: [fn(int(i), contexts[c[0]]) for i in c[1]], enumerate(chunks))
        return [x for part in parts for x in part]


# every ordering, so each mode follows each other mode (and inherits its cache) equally often
_ORDERS = list(itertools.permutations(MODES))


def _interleaved_pass(index, queries, costs, r, rep, contexts, workers) -> dict[str, list[QueryReport]]:
    def one(i, ctx):
        q = queries.point(i)
        order = _ORDERS[(i + rep) % len(_ORDERS)]
        return {m: execute_query(index, q, costs, mode=m, r=r, ctx=ctx, query_id=i) for m in order}

    done = _parallel(queries.n, contexts, workers, one)
    return {m: [d[m] for d in done] for m in MODES}


def _rel_errors(est, exact) -> np.ndarray:
    est, exact = np.asarray(est, dtype=float), np.asarray(exact, dtype=float)
    ok = exact > 0
    return np.abs(est[ok] - exact[ok]) / exact[ok]


def _nanmean(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(x.mean()) if x.size else float("nan")


def run_radius(cfg: BenchConfig, index: HybridIndex, queries: Dataset, costs: CostParams, r: float,
               truth: GroundTruth, timed: bool = True, per_query: list | None = None) -> list[BenchRow]:
    """All three modes at one radius; returns one row per mode."""
    workers = 1 if timed else cfg.workers
    contexts = [QueryContext(index) for _ in range(workers)]
    nq = queries.n
    exact = [exact_candidate_stats(index, queries.point(i)) for i in range(nq)]
    # untimed warm-up over the same code paths as the timed passes
    _run_pass(index, queries, costs, "hybrid", r, contexts, workers)

    times = {mode: np.zeros((cfg.repetitions, nq)) for mode in MODES}
    reports = {}
    for rep in range(cfg.repetitions):
        outs = _interleaved_pass(index, queries, costs, r, rep, contexts, workers)
        for mode, out in outs.items():
            times[mode][rep] = [x.total_ns for x in out]
            if rep == 0:
                reports[mode] = out
            if per_query is not None:
                for x in out:
                    x.cand_size_exact = exact[x.query_id][1]
                    per_query.append((r, rep, x))

    per_query_median = {mode: np.median(t, axis=0) for mode, t in times.items()}
    lsh_faster = per_query_median["lsh-only"] < per_query_median["linear-only"]
    rows = []
    for mode in MODES:
        reps = reports[mode]
        rec = [recall(x.neighbors.ids, truth.ids[i]) for i, x in enumerate(reps)]
        linear_calls = [x.strategy is Strategy.LINEAR_SEARCH for x in reps]
        hybrid = mode == "hybrid"
        est = [x.cand_size_est for x in reps]
        hll_err = _nanmean(_rel_errors(est, [e[1] for e in exact])) if hybrid else float("nan")
        est_ns = sum(x.estimate_ns for x in reps)
        agreement = float("nan")
        if hybrid and nq:
            chose_lsh = np.array([not c for c in linear_calls])
            agreement = float(np.mean(chose_lsh == lsh_faster))
        rep_means = times[mode].mean(axis=1) if nq else np.full(cfg.repetitions, np.nan)
        rows.append(BenchRow(
            dataset=cfg.dataset, metric=index.data.metric.value, r=r, mode=mode, k=index.k, n=index.n,
            n_queries=nq, mean_query_ns=float(np.mean(rep_means)), median_query_ns=float(np.median(rep_means)),
            recall_mean=_nanmean(rec), linear_call_fraction=_nanmean(linear_calls),
            hll_rel_error_mean=hll_err,
            hll_cost_fraction=est_ns / max(1, sum(x.total_ns for x in reps)) if hybrid else float("nan"),
            collisions_mean=_nanmean([e[0] for e in exact]),
            cand_exact_mean=_nanmean([e[1] for e in exact]),
            cand_est_mean=_nanmean(est) if hybrid else float("nan"),
            decision_agreement=agreement, seed=cfg.seed))
    return rows


def run_bench(cfg: BenchConfig, timed: bool = True, per_query: list | None = None,
              log=None) -> tuple[list[BenchRow], CostParams]:
    """The full protocol over ``cfg.radii``; returns the rows and the cost parameters used."""
    data = load_bench_data(cfg)
    queries, reduced = sample_queries(data, cfg.queries, seed=cfg.seed + 1)
    costs = bench_costs(cfg, reduced, queries)
    if log:
        log(f"costs: alpha={costs.alpha:.4g} beta={costs.beta:.4g} ratio={costs.ratio:.4g}")
    cache = GroundTruthCache(cfg.gt_cache) if cfg.gt_cache else None
    rows = []
    for r in cfg.radii:
        t0 = time.perf_counter()
        index = build_index(reduced, index_params(cfg, reduced, r), workers=1 if timed else cfg.workers)
        truth = cache.get(reduced, queries, r) if cache else GroundTruth.compute(reduced, queries, r)
        out = run_radius(cfg, index, queries, costs, r, truth, timed=timed, per_query=per_query)
        rows.extend(out)
        if log:
            h = out[0]
            log(f"r={r:g} k={index.k} linear_calls={h.linear_call_fraction:.2f} "
                f"agreement={h.decision_agreement:.2f} ({time.perf_counter() - t0:.1f}s)")
    return rows, costs


# -- hll-eval ------------------------------------------------------------------------

@dataclass
class HllEvalRow:
    dataset: str
    metric: str
    r: float
    m: int
    L: int
    n_instances: int
    rel_error_mean: float
    rel_error_std: float
    rel_error_median: float
    cost_fraction: float
    estimate_ns_mean: float
    seed: int


HLL_FIELDS = [f.name for f in dataclasses.fields(HllEvalRow)]


def run_hll_eval(cfg: BenchConfig, index_seeds: int = 1, log=None) -> list[HllEvalRow]:
    """Per-query relative error of the candidate estimate and its share of hybrid query time.

    Each radius is evaluated on ``index_seeds`` independently seeded index
    builds; instances are (query, build) pairs with a non-empty candidate set.
    """
    data = load_bench_data(cfg)
    queries, reduced = sample_queries(data, cfg.queries, seed=cfg.seed + 1)
    costs = bench_costs(cfg, reduced, queries) if cfg.costs != "calibrate" else CostParams.preset(reduced.metric)
    rows = []
    for r in cfg.radii:
        errors, est_ns, total_ns = [], [], []
        for s in range(index_seeds):
            index = build_index(reduced, index_params(cfg, reduced, r, seed=cfg.seed + 1000 * s))
            ctx = QueryContext(index)
            _run_pass(index, queries, costs, "hybrid", r, [ctx], 1)
            for i in range(queries.n):
                rep = execute_query(index, queries.point(i), costs, mode="hybrid", r=r, ctx=ctx,
                                    query_id=i, oracle=True)
                if rep.cand_size_exact:
                    errors.append(abs(rep.cand_size_est - rep.cand_size_exact) / rep.cand_size_exact)
                est_ns.append(rep.estimate_ns)
                total_ns.append(rep.total_ns)
        err = np.asarray(errors)
        rows.append(HllEvalRow(
            dataset=cfg.dataset, metric=reduced.metric.value, r=r, m=cfg.m, L=cfg.L, n_instances=err.size,
            rel_error_mean=_nanmean(err), rel_error_std=float(err.std()) if err.size else float("nan"),
            rel_error_median=float(np.median(err)) if err.size else float("nan"),
            cost_fraction=sum(est_ns) / max(1, sum(total_ns)),
            estimate_ns_mean=_nanmean(est_ns), seed=cfg.seed))
        if log:
            h = rows[-1]
            log(f"r={r:g} m={cfg.m} error={h.rel_error_mean:.4f}+-{h.rel_error_std:.4f} "
                f"cost_fraction={h.cost_fraction:.4f}")
    return rows


def run_estimate_scaling(cfg: BenchConfig, Ls=(10, 25, 50, 100), r: float | None = None,
                         rounds: int = 60, warmup: int = 5) -> list[dict]:
    """Time the estimation step per query for each table count in ``Ls``.

    ``k`` stays at its value for ``cfg.L`` so only the number of tables
    changes.  Builds are timed in interleaved rounds (a fresh random order of
    ``Ls`` per round) and each row reports the median over rounds of the mean
    per-query time, so drift on a shared machine hits every ``L`` alike.
    The first ``warmup`` rounds are discarded.
    """
    data = load_bench_data(cfg)
    queries, reduced = sample_queries(data, cfg.queries, seed=cfg.seed + 1)
    r = cfg.radii[0] if r is None else r
    k = index_params(cfg, reduced, r).k
    setups = []
    for L in Ls:
        index = build_index(reduced, index_params(cfg.replace(L=L, k=k), reduced, r))
        ctx = QueryContext(index)
        buckets = [index.query_buckets(queries.point(i)) for i in range(queries.n)]
        for b in buckets:
            estimate_from_buckets(index, b, ctx)
        setups.append((index, ctx, buckets))
    per_round = [[] for _ in Ls]
    rng = np.random.default_rng(cfg.seed)
    for rnd in range(warmup + rounds):
        for j in rng.permutation(len(Ls)):
            index, ctx, buckets = setups[j]
            t0 = time.perf_counter_ns()
            for b in buckets:
                estimate_from_buckets(index, b, ctx)
            if rnd >= warmup:
                per_round[j].append((time.perf_counter_ns() - t0) / max(1, len(buckets)))
    return [{"L": L, "k": k, "r": r, "estimate_ns": float(np.median(v))} for L, v in zip(Ls, per_round)]


def write_rows(path_or_file, rows, fields=None) -> None:
    rows = list(rows)
    fields = fields or [f.name for f in dataclasses.fields(rows[0])]
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            d = dataclasses.asdict(row) if dataclasses.is_dataclass(row) else row
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in d.items() if k in fields})
    finally:
        if own:
            fh.close()


def per_query_rows(records) -> list[dict]:
    out = []
    for r, rep, report in records:
        row = report.to_row()
        row = {"r": r, "repetition": rep, **row}
        out.append(row)
    return out


PER_QUERY_FIELDS = ["r", "repetition"] + QueryReport.CSV_FIELDS


def summarize(rows: list[BenchRow]) -> dict:
    """Headline numbers over a bench run (hybrid rows)."""
    hyb = [x for x in rows if x.mode == "hybrid"]
    return {
        "linear_call_fraction": [x.linear_call_fraction for x in hyb],
        "decision_agreement_pooled": statistics.fmean(
            [x.decision_agreement for x in hyb]) if hyb else float("nan"),
    }
