# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

import numpy as np
import pytest

import xgam as xg
from xgam.test_helpers import for_all_test_contexts


def _sqdist(p, q):
    dx = p[0] - q[0]
    dy = p[1] - q[1]
    dz = p[2] - q[2]
    return dx * dx + dy * dy + dz * dz


def fps_oracle(coords, n_s, seed):
    n_points = len(coords)
    selected = [seed % n_points]
    while len(selected) < n_s:
        best, best_d2 = None, -1.0
        for ii in range(n_points):
            if ii in selected:
                continue
            d2 = min(_sqdist(coords[ii], coords[jj]) for jj in selected)
            if d2 > best_d2:
                best, best_d2 = ii, d2
        selected.append(best)
    return selected


def ball_oracle(coords, centers, r, k):
    rows = []
    for cc in centers:
        found = [
            ii
            for ii in range(len(coords))
            if _sqdist(coords[ii], coords[cc]) <= r * r
        ][:k]
        rows.append(found + [found[0]] * (k - len(found)))
    return rows


def knn_oracle(coords, centers, k):
    return [
        sorted(
            range(len(coords)),
            key=lambda ii: (_sqdist(coords[ii], coords[cc]), ii),
        )[:k]
        for cc in centers
    ]


def random_clouds(n_clouds, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n_clouds):
        n_points = int(rng.integers(8, 65))
        yield xg.validate_cloud(rng.uniform(-1, 1, size=(n_points, 3)))


def test_fps_square():
    square = np.array(
        [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float
    )
    cloud = xg.validate_cloud(square)
    assert list(xg.farthest_point_sample(cloud, 2, seed=0)) == [0, 2]
    assert list(xg.farthest_point_sample(cloud, 2, seed=5)) == [1, 3]


@for_all_test_contexts
def test_fps_exhaustion(test_context):
    cloud = next(random_clouds(1, seed=3))
    out = xg.farthest_point_sample(
        cloud, cloud.n_points, seed=2, context=test_context
    )
    assert sorted(out) == list(range(cloud.n_points))


def test_fps_errors():
    cloud = xg.validate_cloud(np.eye(3))
    with pytest.raises(xg.TooManyCenters):
        xg.farthest_point_sample(cloud, 4)
    with pytest.raises(xg.InvalidInput):
        xg.farthest_point_sample(cloud, 0)


def test_fps_last_center_is_farthest():
    for cloud in random_clouds(20, seed=4):
        n_s = min(8, cloud.n_points)
        out = list(xg.farthest_point_sample(cloud, n_s, seed=1))
        coords = cloud.coords
        prev, last = out[:-1], out[-1]
        best = min(_sqdist(coords[last], coords[jj]) for jj in prev)
        for ii in set(range(cloud.n_points)) - set(out):
            d2 = min(_sqdist(coords[ii], coords[jj]) for jj in prev)
            assert d2 <= best


@for_all_test_contexts
def test_sampling_matches_oracles(test_context):
    for ii, cloud in enumerate(random_clouds(200)):
        coords = cloud.coords.tolist()
        n_s = min(8, cloud.n_points)
        centers = xg.farthest_point_sample(
            cloud, n_s, seed=ii, context=test_context
        )
        assert list(centers) == fps_oracle(coords, n_s, ii)

        nbrs = xg.ball_query(cloud, centers, 0.5, 8, context=test_context)
        assert nbrs.neighbor_ids.tolist() == ball_oracle(
            coords, centers, 0.5, 8
        )

        nbrs = xg.knn(cloud, centers, 6, context=test_context)
        assert nbrs.neighbor_ids.tolist() == knn_oracle(coords, centers, 6)


def test_grid_ball_query_matches_brute():
    for cloud in random_clouds(50, seed=9):
        centers = np.arange(cloud.n_points)
        for r in (0.1, 0.5, 3.0):
            brute = xg.ball_query(cloud, centers, r, 8, method="brute")
            grid = xg.ball_query(cloud, centers, r, 8, method="grid")
            assert np.array_equal(brute.neighbor_ids, grid.neighbor_ids)


@for_all_test_contexts
def test_ball_query_exact_and_padding(test_context):
    coords = np.array(
        [[0, 0, 0], [0.1, 0, 0], [0, 0.1, 0], [5, 5, 5]], dtype=float
    )
    cloud = xg.validate_cloud(coords)

    nbrs = xg.ball_query(cloud, [0], 0.5, 3, context=test_context)
    assert nbrs.neighbor_ids.tolist() == [[0, 1, 2]]

    nbrs = xg.ball_query(cloud, [3], 0.5, 4, context=test_context)
    assert nbrs.neighbor_ids.tolist() == [[3, 3, 3, 3]]
    assert nbrs.center_ids.tolist() == [3]


def test_ball_query_errors():
    cloud = xg.validate_cloud(np.eye(3))
    with pytest.raises(xg.InvalidInput):
        xg.ball_query(cloud, [0], 0.0, 2)
    with pytest.raises(xg.InvalidInput):
        xg.ball_query(cloud, [3], 1.0, 2)
    with pytest.raises(ValueError):
        xg.ball_query(cloud, [0], 1.0, 2, method="octree")


def test_grid_index_candidates():
    rng = np.random.default_rng(1)
    coords = rng.uniform(0, 1, size=(200, 3))
    grid = xg.GridIndex(coords, cell_size=0.1)
    assert grid.n_cells >= 1
    cand = grid.candidates(0, 0.1)
    assert np.all(np.diff(cand) > 0)
    d2 = ((coords - coords[0]) ** 2).sum(axis=1)
    assert set(np.flatnonzero(d2 <= 0.01)) <= set(cand)
    with pytest.raises(xg.InvalidInput):
        xg.GridIndex(coords, cell_size=0.0)


@for_all_test_contexts
def test_knn_simple(test_context):
    line = np.array([[ii, 0, 0] for ii in range(4)], dtype=float)
    cloud = xg.validate_cloud(line)
    nbrs = xg.knn(cloud, [0], 2, context=test_context)
    assert nbrs.neighbor_ids.tolist() == [[0, 1]]

    nbrs = xg.knn(cloud, [0, 1, 2, 3], 1, context=test_context)
    assert nbrs.neighbor_ids[:, 0].tolist() == [0, 1, 2, 3]

    # equidistant points go to the lowest index
    nbrs = xg.knn(cloud, [1], 3, context=test_context)
    assert nbrs.neighbor_ids.tolist() == [[1, 0, 2]]

    with pytest.raises(xg.KTooLarge):
        xg.knn(cloud, [0], 5, context=test_context)


@for_all_test_contexts
def test_support_neighborhoods(test_context):
    cloud = next(random_clouds(1, seed=5))
    nbrs = xg.knn(cloud, [0, 1, 2], 4)
    support = xg.support_neighborhoods(cloud, nbrs, 5, context=test_context)
    assert support.shape == (3, 4, 5)
    for ss in range(3):
        for jj in range(4):
            expected = xg.knn(cloud, [nbrs.neighbor_ids[ss, jj]], 5)
            assert np.array_equal(support[ss, jj], expected.neighbor_ids[0])
