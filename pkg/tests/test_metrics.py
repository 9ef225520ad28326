import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist

from oracles import collision_quad
from tcamlsh.metrics import (
    ModelParams, QueryCounts, f_measure, ground_truth, make_report, model_predict, parse_report, emit_report,
    reports_from_csv, reports_from_json, reports_to_csv, reports_to_json, tally, whole_match_prob,
)

BASE = dict(n=10, w=8, delta=2.0, c=2.0, l=1.0)


def test_zero_denominators():
    r = make_report(queries=3, queries_with_relevant=0, queries_missed=0, relevant=0, dissimilar=5, tp=0, fp=0, **BASE)
    assert (r.precision, r.recall, r.fn_rate, r.pair_fn_rate, r.fscore) == (1.0, 1.0, 0.0, 0.0, 1.0)
    r = make_report(queries=3, queries_with_relevant=3, queries_missed=3, relevant=4, dissimilar=5, tp=0, fp=2, **BASE)
    assert r.precision == 0.0 and r.recall == 0.0 and r.fscore == 0.0 and r.fn_rate == 1.0
    with pytest.raises(ValueError):
        make_report(queries=0, queries_with_relevant=0, queries_missed=0, relevant=0, dissimilar=0, tp=0, fp=0, **BASE)


counts = st.integers(1, 30).flatmap(lambda k: st.tuples(
    *(st.lists(st.integers(0, 20), min_size=k, max_size=k) for _ in range(4))))


@given(counts)
def test_counting_identities(data):
    rel, dis, tp_raw, fp = (np.array(a) for a in data)
    tp = np.minimum(tp_raw, rel)
    r = QueryCounts(rel, dis, tp, fp).report(**BASE)
    assert r.tp + r.fn == r.relevant
    assert r.queries_missed <= r.queries_with_relevant <= r.queries
    assert r.fscore <= min(2 * r.precision, 2 * r.recall) + 1e-12
    assert 0 <= r.fscore <= 1
    if r.precision + r.recall > 0:
        assert r.fscore == pytest.approx(2 * r.precision * r.recall / (r.precision + r.recall))
    perm = np.random.default_rng(len(rel)).permutation(len(rel))
    assert QueryCounts(rel[perm], dis[perm], tp[perm], fp[perm]).report(**BASE) == r


def test_f_measure_edges():
    assert f_measure(0.0, 0.0) == 0.0
    assert f_measure(1.0, 1.0) == 1.0
    assert f_measure(0.5, 1.0) == pytest.approx(2 / 3)


@given(st.integers(1, 40), st.integers(1, 15), st.integers(1, 5), st.integers(0, 2**32))
@settings(max_examples=60, deadline=None)
def test_ground_truth_against_cdist(n, k, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(-2, 3, size=(n, d)).astype(float)  # integer grid puts many pairs exactly on a threshold
    Q = rng.integers(-2, 3, size=(k, d)).astype(float)
    D = cdist(Q, X)
    gt = ground_truth(X, Q, 1.0, 2.0)
    for i in range(k):
        assert gt.relevant[i].tolist() == np.flatnonzero(D[i] <= 1.0).tolist()
        assert gt.near[i].tolist() == np.flatnonzero(D[i] < 2.0).tolist()
        assert gt.dissimilar[i] == int((D[i] >= 2.0).sum())


def test_tally_ignores_middle_band():
    X = np.array([[0.5, 0], [1.5, 0], [3.0, 0], [1.0, 0]])
    gt = ground_truth(X, np.zeros((1, 2)), 1.0, 2.0)
    c = tally([np.array([0, 1, 2])], gt)
    assert (c.relevant[0], c.tp[0], c.fp[0], c.dissimilar[0]) == (2, 1, 1, 1)


def test_whole_match_prob():
    assert whole_match_prob(1.0, 2.0, 0) == 1.0
    for x, delta, w in [(1.0, 2.0, 10), (2.0, 3.0, 288), (0.5, 1.0, 64)]:
        assert whole_match_prob(x, delta, w) == pytest.approx(collision_quad(x, delta) ** w, rel=1e-8)


def test_model_predict():
    p = ModelParams(n1=5, n2=95, w=64, delta=2.5, c=2.0)
    r = model_predict(p, queries=10)
    ps, pd = whole_match_prob(1.0, 2.5, 64), whole_match_prob(2.0, 2.5, 64)
    assert r.kind == "model" and r.n == 100
    assert r.fn_rate == pytest.approx((1 - ps) ** 5)
    assert r.pair_fn_rate == pytest.approx(1 - ps)
    assert r.fp_per_query == pytest.approx(95 * pd)
    z = model_predict(ModelParams(0, 10, 8, 2.0, 2.0))
    assert z.fn_rate == 0.0 and z.recall == 1.0
    w0 = model_predict(ModelParams(1, 10, 0, 2.0, 2.0))
    assert w0.fp_per_query == 10 and w0.recall == 1
    with pytest.raises(ValueError):
        ModelParams(-1, 2, 8, 2.0, 2.0)


def test_report_files_round_trip(tmp_path):
    reports = [
        model_predict(ModelParams(3, 7, 32, 2.0, 2.0)),
        make_report(dataset="x,y", seed=9, queries=4, queries_with_relevant=3, queries_missed=1,
                    relevant=9, dissimilar=20, tp=5, fp=3, **BASE),
    ]
    assert reports_from_csv(reports_to_csv(reports)) == reports
    assert reports_from_json(reports_to_json(reports, {"a": 1})) == reports
    for name in ("r.csv", "r.json"):
        emit_report(reports, tmp_path / name)
        assert parse_report(tmp_path / name) == reports
    with pytest.raises(ValueError):
        emit_report(reports, tmp_path / "r.txt", fmt="xml")
    with pytest.raises(ValueError):
        reports_from_csv("a,b\n1,2\n")


def test_fn_basis_accessor():
    r = model_predict(ModelParams(3, 7, 32, 2.0, 2.0))
    assert r.fn_for("pair") == r.pair_fn_rate and r.fn_for("query") == r.fn_rate
    assert r.fn_trials("pair") == r.relevant
    with pytest.raises(ValueError):
        r.fn_for("point")
    assert math.isfinite(r.fscore)
