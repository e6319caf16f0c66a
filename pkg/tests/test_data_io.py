import numpy as np
import pytest
import scipy.sparse as sp

from hybridlsh.data_io import (
    ClusterSpec,
    SyntheticSpec,
    bimodal_spec,
    generate_synthetic,
    load_bits,
    load_dense,
    load_sparse,
    sample_queries,
    write_bits,
    write_dense,
    write_sparse,
)
from hybridlsh.errors import ConfigError, InputError, ParseError
from hybridlsh.metrics import Dataset, pack_bits


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_sparse_line(tmp_path):
    ds = load_sparse(write(tmp_path, "a.svm", "1 1:0.5 3:2.0\n-1 2:1\n"))
    assert ds.kind == "sparse" and (ds.n, ds.d) == (2, 3)
    assert ds.data.toarray().tolist() == [[0.5, 0.0, 2.0], [0.0, 1.0, 0.0]]
    assert load_sparse(write(tmp_path, "b.svm", "1 2:1\n"), d=10).d == 10


@pytest.mark.parametrize("text, lineno", [
    ("1 1:0.5\n1 3:1 2:1\n", 2),
    ("1 0:4\n", 1),
    ("1 1:x\n", 1),
    ("1 1:1\n\n# c\n1 a\n", 4),
])
def test_sparse_errors_carry_line_numbers(tmp_path, text, lineno):
    with pytest.raises(ParseError) as exc:
        load_sparse(write(tmp_path, "bad.svm", text))
    assert exc.value.lineno == lineno
    assert f":{lineno}:" in str(exc.value)


def test_dense_and_bits(tmp_path):
    ds = load_dense(write(tmp_path, "a.csv", "1,2\n3.5,-4\n"))
    assert ds.data.tolist() == [[1, 2], [3.5, -4]]
    bits = load_bits(write(tmp_path, "a.hex", "8\nf\n"))
    assert bits.d == 4 and bits.data[:, 0].tolist() == [8, 15]
    with pytest.raises(ParseError) as exc:
        load_dense(write(tmp_path, "b.csv", "1,2\n1,2,3\n"))
    assert exc.value.lineno == 2
    with pytest.raises(ParseError):
        load_dense(write(tmp_path, "c.csv", "1,zz\n"))
    with pytest.raises(ParseError):
        load_bits(write(tmp_path, "b.hex", "ff\nfff\n"))
    with pytest.raises(ParseError):
        load_bits(write(tmp_path, "c.hex", "xyz\n"))


def test_empty_files(tmp_path):
    assert load_dense(write(tmp_path, "e.csv", "")).n == 0
    assert load_sparse(write(tmp_path, "e.svm", "")).n == 0
    assert load_bits(write(tmp_path, "e.hex", "")).n == 0


def test_roundtrips(tmp_path, rng):
    X = rng.standard_normal((20, 5))
    X[X < 0.3] = 0
    dense = Dataset(X, "l2")
    write_dense(tmp_path / "d.csv", dense)
    assert np.array_equal(load_dense(tmp_path / "d.csv").data, X)
    sparse = Dataset(sp.csr_matrix(X), "cosine")
    write_sparse(tmp_path / "s.svm", sparse)
    back = load_sparse(tmp_path / "s.svm", d=5)
    assert np.array_equal(back.data.toarray(), X)
    bits = Dataset(pack_bits(rng.random((9, 130)) < 0.5), "hamming", 130)
    write_bits(tmp_path / "b.hex", bits)
    back = load_bits(tmp_path / "b.hex", d=130)
    assert back.d == 130 and np.array_equal(back.data, bits.data)


def test_synthetic_determinism_and_labels():
    spec = SyntheticSpec(500, 6, (ClusterSpec(200, 0.01), ClusterSpec(100, 0.5)), seed=3)
    a, ya = generate_synthetic(spec)
    b, yb = generate_synthetic(spec)
    assert np.array_equal(a.data, b.data) and np.array_equal(ya, yb)
    assert np.bincount(ya + 1).tolist() == [200, 200, 100]
    c, _ = generate_synthetic(SyntheticSpec(500, 6, spec.clusters, seed=4))
    assert not np.array_equal(a.data, c.data)


def test_tiny_cluster_is_tight():
    data, y = generate_synthetic(SyntheticSpec(300, 4, (ClusterSpec(300, 1e-6),), seed=0))
    assert np.ptp(data.data, axis=0).max() < 1e-4 and np.all(y == 0)


def test_bimodal_sizes_and_hamming():
    spec = bimodal_spec(n=1000, d=8, dense_fraction=0.7, seed=1)
    data, y = generate_synthetic(spec)
    assert data.n == 1000 and np.sum(y == 0) == 700
    fp, _ = generate_synthetic(bimodal_spec(n=100, d=8, metric="hamming"))
    assert fp.kind == "bits" and fp.d == 64


def test_synthetic_validation():
    with pytest.raises(ConfigError):
        SyntheticSpec(10, 2, (ClusterSpec(11, 0.1),))
    with pytest.raises(ConfigError):
        SyntheticSpec(10, 0)
    with pytest.raises(ConfigError):
        SyntheticSpec(10, 2, (ClusterSpec(5, 0.0),))


def test_sample_queries(rng):
    data = Dataset(rng.standard_normal((50, 3)), "l2")
    q, rest = sample_queries(data, 10, seed=2)
    assert q.n == 10 and rest.n == 40
    assert sorted(np.concatenate([q.source_ids, rest.source_ids]).tolist()) == list(range(50))
    assert np.array_equal(q.data, data.data[q.source_ids])
    q0, rest0 = sample_queries(data, 0)
    assert q0.n == 0 and rest0.n == 50
    with pytest.raises(InputError):
        sample_queries(data, 50)
    with pytest.raises(InputError):
        sample_queries(data, -1)
