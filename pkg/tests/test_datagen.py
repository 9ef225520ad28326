import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from tcamlsh.datagen import (
    PointSet, QuerySet, cube_half_side, gen_queries_random, gen_random_cube, gen_threshold, sphere_points,
)


@pytest.mark.parametrize("kind", ["vertices", "box"])
def test_cube_bounds_and_determinism(kind):
    a = gen_random_cube(500, 64, seed=3, kind=kind)
    h = 2 / math.sqrt(64)
    assert a.data.shape == (500, 64)
    assert np.all(np.abs(a.data) <= h)
    assert np.array_equal(a.data, gen_random_cube(500, 64, seed=3, kind=kind).data)
    assert not np.array_equal(a.data, gen_random_cube(500, 64, seed=4, kind=kind).data)


def test_vertex_coordinates_and_pair_distance():
    d = 64
    X = gen_random_cube(2000, d, seed=1).data
    assert set(np.unique(X)) == {-cube_half_side(d), cube_half_side(d)}
    assert abs(np.mean(X > 0) - 0.5) < 0.01
    # each differing coordinate adds 16/d to the squared distance; half differ on average
    sq = np.sum((X[:1000] - X[1000:]) ** 2, axis=1)
    assert np.mean(sq) == pytest.approx(8.0, rel=0.02)


def test_box_moments():
    d = 32
    X = gen_random_cube(20000, d, seed=2, kind="box").data
    h = cube_half_side(d)
    assert stats.kstest(X[:, 0], "uniform", args=(-h, 2 * h)).pvalue > 1e-4
    assert np.var(X) == pytest.approx(h * h / 3, rel=0.02)


def test_unknown_kind_and_sizes():
    with pytest.raises(ValueError):
        gen_random_cube(10, 4, seed=1, kind="ball")
    with pytest.raises(ValueError):
        gen_random_cube(0, 4, seed=1)


@given(st.integers(1, 30), st.floats(1e-3, 1e3), st.integers(0, 2**32))
@settings(max_examples=100, deadline=None)
def test_sphere_distances_exact(d, r, seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=d)
    P = sphere_points(c, r, 20, rng)
    assert np.allclose(np.linalg.norm(P - c, axis=1), r, rtol=1e-12, atol=0)


def test_sphere_directions_are_isotropic():
    P = sphere_points(np.zeros(3), 1.0, 20000, np.random.default_rng(0))
    assert np.allclose(P.mean(axis=0), 0, atol=0.02)
    # on the unit 2-sphere each coordinate is U(-1, 1)
    assert stats.kstest(P[:, 2], "uniform", args=(-1, 2)).pvalue > 1e-4


def test_random_queries():
    pts = gen_random_cube(300, 16, seed=9)
    qs = gen_queries_random(pts, 1.0, 41, seed=2)
    assert len(qs) == 41 and qs.planted.sum() == 20
    for i in np.flatnonzero(qs.planted):
        assert np.linalg.norm(qs.queries[i] - pts.data[qs.planted_id[i]]) == pytest.approx(1.0, rel=1e-12)
    assert np.all(np.isnan(qs.planted_distance[~qs.planted]))
    h = cube_half_side(16)
    assert np.all(np.isin(qs.queries[~qs.planted], [-h, h]))
    with pytest.raises(ValueError):
        gen_queries_random(pts, 1.0, 1, seed=2)


def test_threshold_shells():
    shells, qs = gen_threshold(40, 8, 1.0, 2.0, 5, seed=4)
    assert len(shells) == 5 and len(qs) == 5
    for i in range(5):
        P, sim = shells.instance(i)
        dist = np.linalg.norm(P - qs.queries[i], axis=1)
        assert sim.sum() == 20
        assert np.allclose(dist[sim], 1.0, rtol=1e-12)
        assert np.allclose(dist[~sim], 2.0, rtol=1e-12)
        assert np.array_equal(shells[i].data, P)
        assert np.array_equal(shells.labels(i), sim)
    assert np.array_equal(shells.instance(-1)[0], shells.instance(4)[0])
    with pytest.raises(IndexError):
        shells.instance(5)
    one, _ = gen_threshold(41, 8, 1.0, 2.0, 2, seed=4, n_similar=1)
    assert one.labels(0).sum() == 1
    with pytest.raises(ValueError):
        gen_threshold(41, 8, 1.0, 2.0, 2, seed=4)
    with pytest.raises(ValueError):
        gen_threshold(40, 8, 1.0, 2.0, 2, seed=4, n_similar=41)


def test_threshold_shuffles_labels():
    shells, _ = gen_threshold(400, 4, 1.0, 2.0, 1, seed=4)
    sim = shells.labels(0)
    assert 0 < sim[:200].sum() < 200


def test_point_set_round_trips(tmp_path):
    ps = gen_random_cube(30, 5, seed=1, kind="box")
    ps.save(tmp_path / "p.bin")
    back = PointSet.load(tmp_path / "p.bin")
    assert np.array_equal(back.data, ps.data) and back.meta == ps.meta
    ps.to_csv(tmp_path / "p.csv")
    assert np.array_equal(PointSet.from_csv(tmp_path / "p.csv").data, ps.data)


def test_query_set_round_trip(tmp_path):
    qs = gen_queries_random(gen_random_cube(30, 5, seed=1), 0.5, 7, seed=3)
    qs.save(tmp_path / "q.bin")
    back = QuerySet.load(tmp_path / "q.bin")
    assert np.array_equal(back.queries, qs.queries)
    assert np.array_equal(back.planted_id, qs.planted_id)
    assert np.array_equal(back.planted_distance, qs.planted_distance, equal_nan=True)
    assert back.meta == qs.meta
