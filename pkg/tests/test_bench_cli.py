import csv
import hashlib

import pytest

from hybridlsh import bench
from hybridlsh.cli import main
from hybridlsh.errors import ConfigError

SMALL = """
# tiny bimodal run
dataset = bimodal
n = 3000
d = 16
radii = 0.2, 0.5
L = 10
queries = 20
repetitions = 2
costs = preset
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parse_config():
    cfg = bench.parse_config(SMALL)
    assert (cfg.n, cfg.radii, cfg.costs, cfg.metric) == (3000, (0.2, 0.5), "preset", "l2")
    assert cfg.m == 128 and cfg.L == 10


@pytest.mark.parametrize("text", [
    "bogus = 1", "n = many", "radii =", "metric = chebyshev", "costs = 1,2,3", "costs = 0,1",
    "no equals sign", "repetitions = 0", "delta = 1.5", "dataset = points.xyz", "data_format = parquet",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        bench.parse_config(text)


def test_explicit_costs_accepted():
    assert bench.parse_config("costs = 1.5, 20").costs == "1.5, 20"


def test_exit_codes(tmp_path, cfg_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 3\n")
    assert main(["bench", "--config", str(bad)]) == 2
    assert main(["bench", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["build", "--config", str(cfg_path), "--seed", "-1"]) == 2
    radius = tmp_path / "radius.cfg"
    radius.write_text("metric = cosine\nradii = 2.5\nn = 500\nd = 4\n")
    assert main(["build", "--config", str(radius), "--out", str(tmp_path / "x")]) == 2
    gone = tmp_path / "gone.cfg"
    gone.write_text(f"dataset = {tmp_path / 'nowhere.csv'}\n")
    assert main(["build", "--config", str(gone)]) == 3
    broken = tmp_path / "broken.csv"
    broken.write_text("1,2\n3\n")
    cfg = tmp_path / "broken.cfg"
    cfg.write_text(f"dataset = {broken}\n")
    assert main(["build", "--config", str(cfg)]) == 3
    with pytest.raises(SystemExit):
        main(["explode"])


def test_build_is_reproducible(tmp_path, cfg_path, capsys):
    a, b = tmp_path / "a.hlsh", tmp_path / "b.hlsh"
    assert main(["build", "--config", str(cfg_path), "--seed", "4", "--out", str(a)]) == 0
    assert main(["build", "--config", str(cfg_path), "--seed", "4", "--out", str(b)]) == 0
    assert "sketch_bytes=" in capsys.readouterr().out
    digest = [hashlib.sha256(p.read_bytes()).hexdigest() for p in (a, b)]
    assert digest[0] == digest[1]


def test_bench_csv_reproducible_except_timings(tmp_path, cfg_path):
    outs = [tmp_path / "one.csv", tmp_path / "two.csv"]
    for out in outs:
        assert main(["bench", "--config", str(cfg_path), "--seed", "3", "--timed", "--per-query",
                     "--out", str(out)]) == 0
    one, two = (read_csv(p) for p in outs)
    assert list(one[0]) == bench.BENCH_FIELDS
    assert len(one) == 2 * 3
    for x, y in zip(one, two):
        for key in bench.BENCH_FIELDS:
            if key not in bench.TIMING_FIELDS:
                assert x[key] == y[key], key
    for row in one:
        assert row["seed"] == "3"
        if row["mode"] == "linear-only":
            assert float(row["recall_mean"]) == 1.0
            assert float(row["linear_call_fraction"]) == 1.0
        if row["mode"] == "lsh-only":
            assert float(row["linear_call_fraction"]) == 0.0
    detail = read_csv(tmp_path / "one.queries.csv")
    assert list(detail[0]) == bench.PER_QUERY_FIELDS
    assert len(detail) == 2 * 2 * 3 * 20


def test_hll_eval_and_calibrate(tmp_path, cfg_path):
    out = tmp_path / "hll.csv"
    assert main(["hll-eval", "--config", str(cfg_path), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert list(rows[0]) == bench.HLL_FIELDS and len(rows) == 2
    assert all(0 <= float(r["rel_error_mean"]) < 0.3 for r in rows)
    cal = tmp_path / "cal.csv"
    assert main(["calibrate", "--config", str(cfg_path), "--out", str(cal)]) == 0
    (row,) = read_csv(cal)
    assert row["metric"] == "l2" and float(row["alpha_ns"]) > 0 and float(row["beta_ns"]) > 0


def test_summarize_pools_agreement():
    rows, _ = bench.run_bench(bench.parse_config(SMALL), timed=False)
    s = bench.summarize(rows)
    assert len(s["linear_call_fraction"]) == 2
    assert 0 <= s["decision_agreement_pooled"] <= 1
