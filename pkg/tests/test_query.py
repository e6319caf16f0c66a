import numpy as np
import pytest

from hybridlsh.cost import CostParams, Strategy
from hybridlsh.errors import InputError
from hybridlsh.families import FamilySpec
from hybridlsh.metrics import Dataset
from hybridlsh.oracle import brute_force_rnn, exact_candidate_stats
from hybridlsh.query import (
    Neighbors,
    QueryContext,
    estimate_candidates,
    execute_query,
    hybrid_query,
    linear_search,
    lsh_search,
)
from hybridlsh.tables import IndexParams, build_index

from conftest import RADII, small_dataset


@pytest.fixture(scope="module", params=["l2", "l1", "cosine", "hamming"])
def setup(request):
    metric = request.param
    data = small_dataset(metric, n=3000, d=64 if metric == "hamming" else 16)
    r = RADII[metric]
    index = build_index(data, IndexParams.for_metric(metric, data.d, r, L=20, seed=5, hll_threshold=16))
    return index, data, r


def test_self_query_at_zero_radius():
    data = small_dataset("l2", n=500, d=8)
    index = build_index(data, IndexParams.for_metric("l2", 8, 0.2, L=10))
    for i in (0, 17, 499):
        res = lsh_search(index, data.point(i), r=0.0)
        assert i in res.ids.tolist()
        assert np.all(res.distances == 0)


def test_no_false_positives_and_sorted(setup):
    index, data, r = setup
    ctx = QueryContext(index)
    for i in range(0, data.n, 97):
        res = lsh_search(index, data.point(i), ctx=ctx)
        assert np.all(res.distances <= r)
        assert np.all(np.diff(res.ids) > 0)
        truth, _ = brute_force_rnn(data, data.point(i), r)
        assert set(res.ids.tolist()) <= set(truth.tolist())


def test_linear_search_matches_oracle(setup):
    _, data, r = setup
    for i in range(0, data.n, 301):
        res = linear_search(data, data.point(i), r)
        ids, d = brute_force_rnn(data, data.point(i), r)
        assert np.array_equal(res.ids, ids)
        assert np.allclose(res.distances, d, atol=1e-9)


def test_hybrid_equals_chosen_primitive(setup):
    index, data, r = setup
    ctx = QueryContext(index)
    for ratio in (0.05, 6.0, 1e4):
        costs = CostParams(1.0, ratio)
        for i in range(0, data.n, 211):
            q = data.point(i)
            rep = hybrid_query(index, q, costs, ctx=ctx)
            if rep.strategy is Strategy.LSH_SEARCH:
                assert rep.neighbors == lsh_search(index, q, ctx=ctx)
            else:
                assert rep.neighbors == linear_search(data, q, r)
                assert rep.n_distance_evals == data.n


def test_collisions_exact_and_estimate_close(setup):
    index, data, _ = setup
    ctx = QueryContext(index)
    errors = []
    for i in range(0, data.n, 53):
        q = data.point(i)
        est = estimate_candidates(index, q, ctx)
        coll, distinct = exact_candidate_stats(index, q)
        assert est.collisions == coll
        assert distinct <= coll
        errors.append(abs(est.cand_size_est - distinct) / distinct)
    assert np.mean(errors) <= 0.10


def test_lsh_distance_evals_equal_distinct_candidates(setup):
    index, data, _ = setup
    for i in (1, 2, 3):
        rep = execute_query(index, data.point(i), mode="lsh-only", oracle=True)
        assert rep.n_distance_evals == rep.cand_size_exact
        assert rep.collisions == exact_candidate_stats(index, data.point(i))[0]


def test_scratch_reuse_gives_identical_reports(setup):
    index, data, _ = setup
    costs = CostParams.preset(data.metric)
    ctx = QueryContext(index)
    qs = [data.point(i) for i in range(0, 600, 40)]
    first = [hybrid_query(index, q, costs, ctx=ctx) for q in qs]
    again = [hybrid_query(index, q, costs, ctx=ctx) for q in reversed(qs)][::-1]
    fresh = [hybrid_query(index, q, costs) for q in qs]
    assert all(a.same_result(b) and a.same_result(c) for a, b, c in zip(first, again, fresh))


def test_generation_wraparound(setup):
    index, data, _ = setup
    ctx = QueryContext(index)
    q = data.point(4)
    ref = lsh_search(index, q, ctx=ctx)
    ctx._gen = 2**32 - 2
    assert lsh_search(index, q, ctx=ctx) == ref
    assert lsh_search(index, q, ctx=ctx) == ref
    assert ctx._gen == 1


def test_duplicate_buckets_collapse():
    # every point identical: each table has one bucket holding all of them
    data = Dataset(np.ones((1, 4)), "l2")
    index = build_index(data, IndexParams.for_metric("l2", 4, 0.5, L=30))
    est = estimate_candidates(index, np.ones(4))
    assert est.collisions == 30
    assert est.cand_size_est == pytest.approx(1.0, rel=0.1)


def test_empty_buckets_estimate_zero():
    data = Dataset(np.zeros((10, 2)), "l2")
    index = build_index(data, IndexParams.for_metric("l2", 2, 0.01, L=5))
    est = estimate_candidates(index, np.array([50.0, 50.0]))
    assert (est.collisions, est.cand_size_est) == (0, 0.0)


def test_dense_query_goes_linear_and_isolated_query_goes_lsh():
    rng = np.random.default_rng(0)
    X = np.vstack([0.001 * rng.standard_normal((1000, 8)), 50 + rng.standard_normal((1, 8))])
    data = Dataset(X, "l2")
    index = build_index(data, IndexParams(1.0, 2, FamilySpec("pstable-l2", 8, 2.0, 1), L=20))
    costs = CostParams(1.0, 6.0)
    dense = hybrid_query(index, X[0], costs)
    assert costs.alpha * dense.collisions + costs.beta * dense.cand_size_est >= costs.beta * data.n
    assert dense.strategy is Strategy.LINEAR_SEARCH
    assert len(dense.neighbors) == 1000
    lonely = hybrid_query(index, X[-1], costs)
    assert lonely.strategy is Strategy.LSH_SEARCH
    assert lonely.neighbors.ids.tolist() == [1000]


def test_modes_and_errors(setup):
    index, data, r = setup
    q = data.point(0)
    lin = execute_query(index, q, mode="linear-only", oracle=True)
    assert lin.strategy is Strategy.LINEAR_SEARCH and lin.collisions == exact_candidate_stats(index, q)[0]
    assert lin.estimate_ns == 0 and lin.hash_ns == 0
    lsh = execute_query(index, q, mode="lsh-only")
    assert lsh.strategy is Strategy.LSH_SEARCH and np.isnan(lsh.cand_size_est)
    with pytest.raises(InputError):
        execute_query(index, q, mode="fast")
    with pytest.raises(InputError):
        execute_query(index, q, mode="hybrid")
    with pytest.raises(InputError):
        lsh_search(index, q, ctx=QueryContext(build_index(data, index.params)))


def test_report_row_fields(setup):
    index, data, _ = setup
    rep = hybrid_query(index, data.point(3), CostParams.preset(data.metric), query_id=9, oracle=True)
    row = rep.to_row()
    assert list(row) == rep.CSV_FIELDS
    assert row["query_id"] == 9 and row["total_ns"] == rep.hash_ns + rep.estimate_ns + rep.search_ns
    assert rep.cand_size_exact is not None


def test_neighbors_pairs():
    n = Neighbors(np.array([1, 4]), np.array([0.5, 0.25]))
    assert n.pairs() == [(1, 0.5), (4, 0.25)] and len(n) == 2
