import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist
from scipy.stats import binom

from oracles import codes_loop, match_matrix
from tcamlsh.index import NNIndex, brute_force_nn, build_index, query_nn, query_ss, raw_matches_batch
from tcamlsh.planner import Plan, plan_multi_lookup, plan_single_lookup


def _codes(scheme, X, scale=1.0):
    return np.array([codes_loop(scheme.directions, scheme.offsets, scheme.delta, x / scale) for x in X], np.int8)


@pytest.fixture(scope="module")
def small():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(60, 4))
    Q = X[:20] + rng.normal(scale=0.3, size=(20, 4))
    return X, Q


def test_size_and_determinism(small):
    X, _ = small
    plan = Plan.fixed(2.5, 40)
    a = build_index(X, plan, seed=11)
    b = build_index(X, plan, seed=11)
    assert len(a.table) == 60 and a.n == 60 and a.d == 4
    assert a.table.to_bytes() == b.table.to_bytes()
    assert build_index(X, plan, seed=12).table.to_bytes() != a.table.to_bytes()


def test_stored_point_matches_itself(small):
    X, _ = small
    idx = build_index(X, Plan.fixed(2.0, 64), seed=3)
    for i in range(len(X)):
        raw, verified = query_ss(idx, X[i])
        assert i in raw and i in verified
        nn = query_nn(idx, X[i])
        assert nn is not None and nn.distance <= idx.radius()


@pytest.mark.parametrize("scale", [1.0, 0.7])
def test_raw_matches_equal_positionwise_oracle(small, scale):
    X, Q = small
    idx = build_index(X, Plan.fixed(1.5, 24), seed=9, scale=scale)
    E = _codes(idx.scheme, X, scale)
    batch = raw_matches_batch(idx, Q)
    for i, q in enumerate(Q):
        expect = np.flatnonzero(match_matrix(_codes(idx.scheme, q[None], scale)[0], E))
        raw, verified = query_ss(idx, q)
        assert raw == expect.tolist()
        assert batch[i].tolist() == raw
        assert set(verified) <= set(raw)
        assert all(np.linalg.norm(X[p] - q) <= idx.radius() * (1 + 1e-9) for p in verified)


def test_one_lookup_per_version(small):
    X, Q = small
    idx = build_index(X, plan_multi_lookup(60, 2.0, 0.1), seed=4)
    versions = len(idx.schemes)
    assert versions == 4
    before = idx.table.lookups
    query_nn(idx, Q[0] + 100.0)  # far: every version is consulted
    assert idx.table.lookups - before == versions
    single = build_index(X, Plan.fixed(2.0, 30), seed=4)
    before = single.table.lookups
    query_nn(single, Q[0])
    assert single.table.lookups - before == 1


def test_versions_are_isolated(small):
    X, Q = small
    idx = build_index(X, plan_multi_lookup(60, 2.0, 0.1), seed=4)
    n, p = idx.n, idx.prefix_width
    assert p == 2
    for r in range(len(idx.schemes)):
        E = _codes(idx.schemes[r], X)
        for q in Q[:5]:
            hits = idx.table.match_addresses(idx.query_word(q, r))
            assert np.all(hits // n == r)
            assert (hits % n).tolist() == np.flatnonzero(match_matrix(_codes(idx.schemes[r], q[None])[0], E)).tolist()


def test_save_load_round_trip(tmp_path, small):
    X, Q = small
    idx = build_index(X, plan_multi_lookup(60, 2.0, 0.2), seed=21, scale=0.8)
    idx.save(tmp_path / "ix")
    back = NNIndex.load(tmp_path / "ix")
    assert back.plan == idx.plan and back.scale == idx.scale and back.seed == idx.seed
    assert back.table.to_bytes() == idx.table.to_bytes()
    for q in Q:
        assert query_ss(back, q) == query_ss(idx, q)
        assert query_nn(back, q) == query_nn(idx, q)


def test_empty_index():
    idx = build_index(np.zeros((0, 3)), Plan.fixed(2.0, 16), seed=1)
    assert idx.n == 0 and len(idx.table) == 0
    assert query_nn(idx, np.zeros(3)) is None
    assert query_ss(idx, np.zeros(3)) == ([], [])
    with pytest.raises(ValueError):
        build_index([], Plan.fixed(2.0, 16), seed=1)
    assert build_index([], Plan.fixed(2.0, 16), seed=1, d=5).d == 5


def test_dimension_and_value_errors(small):
    X, _ = small
    idx = build_index(X, Plan.fixed(2.0, 16), seed=1)
    with pytest.raises(ValueError):
        query_nn(idx, np.zeros(5))
    with pytest.raises(ValueError):
        build_index(X, Plan.fixed(2.0, 16), seed=1, scale=0.0)
    with pytest.raises(ValueError):
        build_index(np.array([[np.nan, 0, 0, 0]]), Plan.fixed(2.0, 16), seed=1)


def test_width_zero_matches_everything(small):
    X, Q = small
    idx = build_index(X, Plan.fixed(2.0, 0), seed=1)
    raw, _ = query_ss(idx, Q[0])
    assert raw == list(range(len(X)))


def test_guarantees_monte_carlo():
    # one point at distance 1 from the query and n-1 points at distance exactly c
    n, c, eps, d = 50, 2.0, 0.3, 6
    plan = plan_single_lookup(n, c, eps, "tight")
    trials, near_miss, far_hit = 400, 0, 0
    rng = np.random.default_rng(2024)
    for t in range(trials):
        dirs = rng.normal(size=(n, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        X = dirs * np.r_[1.0, np.full(n - 1, c)][:, None]
        idx = build_index(X, plan, seed=int(rng.integers(2**62)))
        raw, _ = query_ss(idx, np.zeros(d))
        near_miss += 0 not in raw
        far_hit += len(raw) - (0 in raw) > 0
    # each failure mode is bounded by eps/2; allow a 1e-4 binomial tail
    bound = binom.ppf(1 - 1e-4, trials, eps / 2)
    assert near_miss <= bound
    assert far_hit <= bound


@given(st.integers(1, 40), st.integers(1, 6), st.integers(0, 2**32))
@settings(max_examples=200, deadline=None)
def test_brute_force_matches_cdist(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(-3, 4, size=(n, d)).astype(float)  # integer grid makes ties common
    q = rng.integers(-3, 4, size=d).astype(float)
    D = cdist(q[None], X)[0]
    nn = brute_force_nn(X, q)
    assert nn.id == int(np.flatnonzero(D == D.min())[0])
    assert nn.distance == pytest.approx(D.min(), abs=1e-12)


def test_brute_force_rejects_empty():
    with pytest.raises(ValueError):
        brute_force_nn(np.zeros((0, 2)), np.zeros(2))
