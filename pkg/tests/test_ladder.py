import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import codes_loop, match_matrix, nearest_cdist
from tcamlsh.index import Plan
from tcamlsh.ladder import build_ladder, ladder_levels, query_anns


@pytest.mark.parametrize(
    "r0, rmax, c, m",
    [(1.0, 1.0, 2.0, 1), (0.5, 1.0, 2.0, 3), (0.25, 1.0, 2.0, 5), (1.0, 4.0, 4.0, 3), (1.0, 1.5, 2.0, 3)],
)
def test_level_count(r0, rmax, c, m):
    assert ladder_levels(r0, rmax, c) == m


@given(st.floats(1e-3, 1e3), st.floats(1.0, 1e3), st.floats(1.05, 10.0))
def test_top_level_reaches_rmax(r0, ratio, c):
    m = ladder_levels(r0, r0 * ratio, c)
    assert r0 * c ** ((m - 1) / 2) >= r0 * ratio * (1 - 1e-9)
    if m > 2:
        assert r0 * c ** ((m - 2) / 2) < r0 * ratio


@pytest.mark.parametrize("args", [(0.0, 1.0, 2.0), (2.0, 1.0, 2.0), (0.5, 1.0, 1.0)])
def test_level_count_errors(args):
    with pytest.raises(ValueError):
        ladder_levels(*args)


@pytest.fixture(scope="module")
def ladder():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(40, 3))
    return build_ladder(X, 0.5, 1.0, 2.0, 0.5, seed=17, plan=Plan.fixed(2.0, 48, c=math.sqrt(2)))


def test_layout(ladder):
    n = ladder.n
    assert ladder.m == 3 and len(ladder.table) == 3 * n
    for i, lv in enumerate(ladder.levels):
        assert (lv.start, lv.stop) == (i * n, (i + 1) * n)
        assert lv.lower == pytest.approx(0.5 * 2 ** (i / 2))
        assert lv.upper == pytest.approx(lv.lower * math.sqrt(2))
        for a in (lv.start, lv.stop - 1):
            assert ladder.decode(int(ladder.table.payloads[a])) == (i + 1, a - lv.start)


def test_one_lookup_and_lowest_address_oracle(ladder):
    rng = np.random.default_rng(1)
    X = ladder.points
    for q in rng.normal(size=(25, 3)):
        before = ladder.table.lookups
        got = query_anns(ladder, q)
        assert ladder.table.lookups - before == 1
        expect = None
        for lv in ladder.levels:
            s = lv.scheme
            E = np.array([codes_loop(s.directions, s.offsets, s.delta, x / lv.lower) for x in X], np.int8)
            qc = np.array(codes_loop(s.directions, s.offsets, s.delta, q / lv.lower), np.int8)
            hits = np.flatnonzero(match_matrix(qc, E))
            if hits.size:
                expect = int(hits[0])
                break
        if expect is None:
            assert got is None
        else:
            assert got.id == expect
            assert got.distance == pytest.approx(np.linalg.norm(X[expect] - q), abs=1e-12)


def test_approximation_rate_small():
    # answers must land within c * max(r*, r0) except with probability about epsilon
    rng = np.random.default_rng(33)
    r0, rmax, c, eps = 0.5, 1.0, 2.0, 0.5
    X = rng.uniform(-1, 1, size=(200, 4))
    lad = build_ladder(X, r0, rmax, c, eps, seed=5)
    Q = X[rng.integers(0, 200, 100)] + rng.normal(scale=0.3, size=(100, 4))
    dstar = [nearest_cdist(X, q)[1] for q in Q]
    bad = 0
    for q, ds in zip(Q, dstar):
        if ds > rmax:
            continue
        ans = query_anns(lad, q)
        bad += ans is None or ans.distance > c * max(ds, r0) * (1 + 1e-9)
    assert bad <= 0.5 * len(Q) * eps


def test_empty_ladder():
    lad = build_ladder(np.zeros((0, 2)).reshape(0, 2), 0.5, 1.0, 2.0, 0.5, seed=1, plan=Plan.fixed(2.0, 8))
    assert query_anns(lad, np.zeros(2)) is None
