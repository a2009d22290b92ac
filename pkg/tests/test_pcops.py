import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vffr import pcops
from vffr.pcops import EvgParams

import oracles


def _cloud(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(8, 200))
    return rng.uniform(-0.5, 0.5, (n, 3)), rng


# -- farthest point sampling ----------------------------------------------

def test_fps_line_examples(backend):
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [10.0, 0, 0]])
    assert pcops.farthest_point_sampling(pts, 2, 0).tolist() == [0, 2]
    assert pcops.farthest_point_sampling(pts, 3, 0).tolist() == [0, 2, 1]


def test_fps_full_is_permutation(backend):
    pts, _ = _cloud(1, 57)
    out = pcops.farthest_point_sampling(pts, 57, 5)
    assert out[0] == 5
    assert sorted(out.tolist()) == list(range(57))


def test_fps_rejects_oversampling(backend):
    with pytest.raises(ValueError):
        pcops.farthest_point_sampling(np.zeros((3, 3)), 4, 0)


@pytest.mark.parametrize("seed", range(20))
def test_fps_matches_oracle(backend, seed):
    pts, rng = _cloud(seed)
    m = int(rng.integers(1, len(pts) + 1))
    start = int(rng.integers(len(pts)))
    assert np.array_equal(pcops.farthest_point_sampling(pts, m, start), oracles.fps(pts, m, start))


def test_fps_ties_lower_index(backend):
    # four corners of a square, all equidistant from the start's opposite pair
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0], [1.0, 1, 0]])
    assert pcops.farthest_point_sampling(pts, 4, 0).tolist() == [0, 3, 1, 2]


def test_fps_start_is_permutation_invariant():
    pts, rng = _cloud(3, 40)
    perm = rng.permutation(40)
    assert perm[pcops.fps_start(pts[perm])] == pcops.fps_start(pts)


# -- ball query -------------------------------------------------------------

def test_ball_query_examples(backend):
    pts = np.array([[0.5, 0, 0], [0.0, 1.0, 0], [0.0, 0, 2.0]])
    c = np.zeros((1, 3))
    nl = pcops.ball_query(pts, c, 1.5, 4)
    assert nl.counts.tolist() == [2]
    assert nl.indices.tolist() == [[0, 1, 0, 0]]
    nl = pcops.ball_query(pts, c, 1.5, 1)
    assert nl.indices.tolist() == [[0]]


def test_ball_query_empty_group(backend):
    nl = pcops.ball_query(np.ones((2, 3)), np.zeros((1, 3)), 0.1, 3)
    assert nl.counts.tolist() == [0]
    assert nl.indices.tolist() == [[-1, -1, -1]]


@pytest.mark.parametrize("seed", range(20))
def test_ball_query_matches_oracle(backend, seed):
    pts, rng = _cloud(seed, 200)
    centers = pts[rng.choice(200, 15, replace=False)] + rng.normal(0, 0.02, (15, 3))
    r = float(rng.uniform(0.05, 0.4))
    k = int(rng.integers(1, 40))
    nl = pcops.ball_query(pts, centers, r, k)
    idx, cnt = oracles.ball(pts, centers, r, k)
    assert np.array_equal(nl.indices, idx)
    assert np.array_equal(nl.counts, cnt)


# -- knn --------------------------------------------------------------------

def test_knn_coincident_first(backend):
    pts, _ = _cloud(4, 30)
    idx, dist = pcops.knn(pts, pts[7:8], 3)
    assert idx[0, 0] == 7 and dist[0, 0] == 0.0


def test_knn_all_sorted(backend):
    pts, _ = _cloud(5, 25)
    q = np.zeros((1, 3))
    idx, dist = pcops.knn(pts, q, 25)
    assert sorted(idx[0].tolist()) == list(range(25))
    assert np.all(np.diff(dist[0]) >= 0)


def test_knn_too_many(backend):
    with pytest.raises(ValueError):
        pcops.knn(np.zeros((3, 3)), np.zeros((1, 3)), 4)


@pytest.mark.parametrize("seed", range(20))
def test_knn_matches_oracle(backend, seed):
    pts, rng = _cloud(seed)
    q = rng.uniform(-0.6, 0.6, (12, 3))
    k = int(rng.integers(1, min(len(pts), 20) + 1))
    idx, dist = pcops.knn(pts, q, k)
    oi, od = oracles.knn(pts, q, k)
    assert np.array_equal(idx, oi)
    assert np.array_equal(dist, od)


def test_knn_grid_ties(backend):
    g = np.stack(np.meshgrid(*[np.arange(4.0)] * 3, indexing="ij"), -1).reshape(-1, 3)
    q = np.array([[1.5, 1.5, 1.5], [0.0, 0.0, 0.0]])
    idx, dist = pcops.knn(g, q, 10)
    oi, od = oracles.knn(g, q, 10)
    assert np.array_equal(idx, oi) and np.array_equal(dist, od)


# -- EVG --------------------------------------------------------------------

def test_evg_axis_direction(backend):
    pts = np.column_stack([np.arange(-3.0, 4.0), np.zeros(7), np.zeros(7)])
    dirs, _, deg = pcops.principal_directions(pts, np.arange(7)[None, :])
    assert not deg[0]
    assert np.allclose(np.abs(dirs[0]), [1, 0, 0], atol=1e-12)


def test_evg_capsule_membership(backend):
    xs = np.array([-3.0, -2.5, -2.0, -1.0, 0.0, 1.0, 2.0, 2.5, 3.0, 2.6])
    pts = np.column_stack([xs, np.zeros_like(xs), np.zeros_like(xs)])
    grp = pcops.evg_query(pts, np.zeros((1, 3)), EvgParams(k=7, half_length=2.0, radius=0.5, max_k=16))
    members = set(grp.indices[0, : grp.counts[0]].tolist())
    assert members == {i for i, x in enumerate(xs) if abs(x) <= 2.5}


def test_evg_sign_invariance(backend):
    pts, rng = _cloud(11, 150)
    pts[:, 0] *= 4
    centers = pts[:10]
    grp = pcops.evg_query(pts, centers, EvgParams(k=16, half_length=0.2, radius=0.1, max_k=32))
    for c in range(10):
        v = grp.directions[c]
        a = oracles.capsule(pts, centers[c], v, 0.2, 0.1, 32)
        b = oracles.capsule(pts, centers[c], -v, 0.2, 0.1, 32)
        assert a == b
        assert grp.indices[c].tolist() == a[0]


def test_evg_tie_is_deterministic(backend):
    # symmetric cross: x and y spreads tie, z smaller
    pts = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0],
                    [0, 0, 0.2], [0, 0, -0.2], [0, 0, 0]])
    p = EvgParams(k=7, half_length=0.5, radius=0.3, max_k=7)
    a = pcops.evg_query(pts, np.zeros((1, 3)), p)
    b = pcops.evg_query(pts, np.zeros((1, 3)), p)
    assert np.array_equal(a.directions, b.directions)
    assert np.allclose(np.abs(a.directions[0]), [1, 0, 0])
    assert np.array_equal(a.indices, b.indices)


def test_evg_degenerate_falls_back_to_ball(backend):
    pts = np.vstack([np.zeros((5, 3)), [[0.3, 0, 0], [2.0, 0, 0]]])
    grp = pcops.evg_query(pts, np.zeros((1, 3)), EvgParams(k=4, half_length=1.0, radius=0.5, max_k=8))
    assert grp.fallback.tolist() == [True]
    ball = pcops.ball_query(pts, np.zeros((1, 3)), 0.5, 8)
    assert np.array_equal(grp.indices, ball.indices)


@pytest.mark.parametrize("seed", range(10))
def test_evg_matches_oracle(backend, seed):
    pts, rng = _cloud(seed, 180)
    pts *= np.array([1.0, 0.3, 0.2])
    centers = pts[rng.choice(180, 8, replace=False)]
    p = EvgParams(k=int(rng.integers(3, 30)), half_length=float(rng.uniform(0.01, 0.2)),
                  radius=float(rng.uniform(0.03, 0.2)), max_k=int(rng.integers(1, 40)))
    grp = pcops.evg_query(pts, centers, p)
    nb, _ = oracles.knn(pts, centers, p.k)
    for c in range(len(centers)):
        v, w = oracles.top_eigenvector(pts[nb[c]])
        assert min(np.abs(grp.directions[c] - v).max(), np.abs(grp.directions[c] + v).max()) < 1e-9
        row, cnt = oracles.capsule(pts, centers[c], grp.directions[c], p.half_length, p.radius, p.max_k)
        assert grp.indices[c].tolist() == row and grp.counts[c] == cnt


def test_evg_params_validate():
    with pytest.raises(ValueError):
        EvgParams(k=2, half_length=1, radius=1, max_k=1)
    with pytest.raises(ValueError):
        EvgParams(k=3, half_length=0, radius=1, max_k=1)


# -- interpolation ------------------------------------------------------------

def test_interp_coincident(backend):
    coarse = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    f = np.array([2.0, 5.0, 7.0, 11.0])
    out = pcops.three_nn_interpolate(coarse, f, coarse[1:2])
    assert abs(out[0] - 5.0) <= 1e-6 * 5.0


def test_interp_equidistant(backend):
    ang = 2 * np.pi * np.arange(3) / 3
    coarse = np.column_stack([np.cos(ang), np.sin(ang), np.zeros(3)])
    out = pcops.three_nn_interpolate(coarse, np.array([0.0, 3.0, 6.0]), np.zeros((1, 3)))
    assert out[0] == pytest.approx(3.0, abs=1e-12)


def test_interp_needs_three(backend):
    with pytest.raises(ValueError):
        pcops.three_nn_interpolate(np.zeros((2, 3)), np.zeros(2), np.zeros((1, 3)))


@pytest.mark.parametrize("seed", range(5))
def test_interp_matches_oracle(backend, seed):
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(-1, 1, (30, 3))
    feats = rng.normal(size=(30, 4))
    fine = rng.uniform(-1, 1, (50, 3))
    got = pcops.three_nn_interpolate(coarse, feats, fine)
    assert np.allclose(got, oracles.idw3(coarse, feats, fine), rtol=1e-12, atol=1e-12)


# -- autograd helpers -------------------------------------------------------------

def test_group_max_and_backward(backend):
    x = np.array([[[1.0, 5.0], [3.0, 5.0], [3.0, 0.0]]])
    out, arg = pcops.group_max(x)
    assert out.tolist() == [[3.0, 5.0]]
    assert arg.tolist() == [[1, 0]]
    g = pcops.group_max_backward(np.array([[1.0, 2.0]]), arg, 3)
    assert g.tolist() == [[[0.0, 2.0], [1.0, 0.0], [0.0, 0.0]]]


def test_scatter_add_rows(backend):
    src = np.arange(8.0).reshape(4, 2)
    out = pcops.scatter_add_rows(src, np.array([2, 0, 2, 1]), 3)
    assert out.tolist() == [[2.0, 3.0], [6.0, 7.0], [4.0, 6.0]]


# -- properties -------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(5, 80))
def test_permutation_covariance(seed, n):
    pts, rng = _cloud(seed, n)
    perm = rng.permutation(n)
    inv = np.argsort(perm)
    q = rng.uniform(-0.5, 0.5, (6, 3))
    k = min(4, n)
    a, da = pcops.knn(pts, q, k)
    b, db = pcops.knn(pts[perm], q, k)
    assert np.array_equal(da, db)
    # ties aside (probability zero here) the neighbour sets relabel exactly
    assert np.array_equal(perm[b], a)
    nl = pcops.ball_query(pts, q, 0.3, n)
    nl2 = pcops.ball_query(pts[perm], q, 0.3, n)
    for c in range(6):
        s1 = set(nl.indices[c, : nl.counts[c]].tolist())
        s2 = {int(perm[j]) for j in nl2.indices[c, : nl2.counts[c]]}
        assert s1 == s2
    s = pcops.fps_start(pts)
    f1 = pcops.farthest_point_sampling(pts, min(10, n), s)
    f2 = pcops.farthest_point_sampling(pts[perm], min(10, n), int(inv[s]))
    assert np.array_equal(perm[f2], f1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_backends_agree(seed):
    if len(pcops.available_backends()) < 2:
        pytest.skip("compiled backend not built")
    pts, rng = _cloud(seed, 120)
    c = pts[:10]
    res = {}
    for name in ("cython", "python"):
        pcops.set_backend(name)
        try:
            res[name] = (
                pcops.farthest_point_sampling(pts, 30, 0),
                pcops.knn(pts, c, 7),
                pcops.ball_query(pts, c, 0.2, 16).indices,
                pcops.evg_query(pts, c, EvgParams(10, 0.1, 0.15, 16)).indices,
            )
        finally:
            pcops.set_backend("cython")
    a, b = res["cython"], res["python"]
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1][0], b[1][0]) and np.array_equal(a[1][1], b[1][1])
    assert np.array_equal(a[2], b[2])
    assert np.array_equal(a[3], b[3])
