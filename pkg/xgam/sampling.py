# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

"""
Center selection and neighborhood search.

Every function takes ``context=None``: ``None`` runs the numpy reference
implementation, a ``ContextCpu`` runs the compiled kernels. Both paths
compute squared distances as ``dx*dx + dy*dy + dz*dz`` so that they return
identical indices.
"""

import logging

import numpy as np

from .core import (
    EmptyBall,
    InvalidInput,
    KTooLarge,
    NeighborhoodIndex,
    TooManyCenters,
)
from .kernels import get_kernels

log = logging.getLogger(__name__)

BALL_QUERY_METHODS = ("brute", "grid")

# cap on the number of grid cells along one axis
_MAX_CELLS_PER_AXIS = 256


def squared_distances(coords, index):
    """Squared distances from ``coords[index]`` to every point."""
    diff = coords - coords[index]
    return (
        diff[:, 0] * diff[:, 0]
        + diff[:, 1] * diff[:, 1]
        + diff[:, 2] * diff[:, 2]
    )


def as_center_ids(centers, n_points):
    center_ids = np.asarray(centers, dtype=np.int64).reshape(-1)
    if center_ids.shape[0] < 1:
        raise InvalidInput("At least one center is needed")
    if center_ids.min() < 0 or center_ids.max() >= n_points:
        raise InvalidInput(
            f"center ids out of range for a cloud of {n_points} points"
        )
    return np.ascontiguousarray(center_ids)


def farthest_point_sample(cloud, n_s, seed=0, context=None):
    """Select ``n_s`` distinct centers by farthest point sampling.

    The first center is ``seed % N``; every following center maximizes the
    distance to the already selected ones, ties going to the lowest index.
    """
    n_points = cloud.n_points
    if n_s < 1:
        raise InvalidInput(f"n_s must be >= 1, got {n_s}")
    if n_s > n_points:
        raise TooManyCenters(
            f"Cannot sample {n_s} centers from {n_points} points"
        )
    first = int(seed) % n_points

    out = np.empty(n_s, dtype=np.int64)
    # selected points are flagged with -1
    min_d2 = np.full(n_points, np.inf)

    if context is not None:
        get_kernels(context).gam_farthest_point_sample(
            n_points=n_points,
            n_centers=n_s,
            first=first,
            coords=cloud.coords,
            min_d2=min_d2,
            out=out,
        )
        return out

    out[0] = first
    min_d2[first] = -1.0
    last = first
    for mm in range(1, n_s):
        d2 = squared_distances(cloud.coords, last)
        np.minimum(min_d2, d2, out=min_d2, where=min_d2 >= 0)
        last = int(np.argmax(min_d2))
        out[mm] = last
        min_d2[last] = -1.0
    return out


class GridIndex:
    """Uniform grid over a cloud, points bucketed by cubic cell.

    ``candidates(index, r)`` returns, in ascending order, a superset of the
    points within ``r`` of ``coords[index]``.
    """

    def __init__(self, coords, cell_size):
        coords = np.asarray(coords, dtype=np.float64)
        if not cell_size > 0:
            raise InvalidInput(f"cell_size must be > 0, got {cell_size}")
        self.coords = coords
        self.origin = coords.min(axis=0)
        extent = float((coords.max(axis=0) - self.origin).max())
        self.cell_size = max(float(cell_size), extent / _MAX_CELLS_PER_AXIS)

        cells = self._cell_of(coords)
        self.shape = tuple(int(ss) for ss in cells.max(axis=0) + 1)
        keys = np.ravel_multi_index(tuple(cells.T), self.shape)
        self._order = np.argsort(keys, kind="stable")
        self._sorted_keys = keys[self._order]

    def _cell_of(self, points):
        return np.floor((points - self.origin) / self.cell_size).astype(
            np.int64
        )

    @property
    def n_cells(self):
        return int(np.prod(self.shape))

    def candidates(self, index, r):
        point = self.coords[index]
        # one extra cell each side absorbs rounding at the ball boundary
        lo = np.maximum(self._cell_of(point - r) - 1, 0)
        hi = np.minimum(self._cell_of(point + r) + 1, np.array(self.shape) - 1)
        axes = [np.arange(ll, hh + 1) for ll, hh in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        box_keys = np.ravel_multi_index(
            tuple(mm.reshape(-1) for mm in mesh), self.shape
        )
        starts = np.searchsorted(self._sorted_keys, box_keys, side="left")
        stops = np.searchsorted(self._sorted_keys, box_keys, side="right")
        found = [
            self._order[aa:bb] for aa, bb in zip(starts, stops) if bb > aa
        ]
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate(found))


def _pad_rows(rows, k):
    out = np.empty((len(rows), k), dtype=np.int64)
    counts = np.empty(len(rows), dtype=np.int64)
    for ss, found in enumerate(rows):
        found = found[:k]
        counts[ss] = found.shape[0]
        out[ss, : found.shape[0]] = found
        out[ss, found.shape[0] :] = found[0] if found.shape[0] else -1
    return out, counts


def ball_query(cloud, centers, r, k, method="brute", context=None):
    """Up to ``k`` points within distance ``r`` of every center.

    Indices come in ascending order; rows with fewer than ``k`` hits are
    padded with their first hit. The center is its own neighbor.

    Raises:
        EmptyBall: some center has no point within ``r``.
    """
    center_ids = as_center_ids(centers, cloud.n_points)
    if not r > 0:
        raise InvalidInput(f"radius must be > 0, got {r}")
    if k < 1:
        raise InvalidInput(f"k must be >= 1, got {k}")
    if method not in BALL_QUERY_METHODS:
        raise ValueError(f"Unknown ball query method `{method}`")
    r2 = float(r) * float(r)
    coords = cloud.coords

    if context is not None:
        if method != "brute":
            raise ValueError("Compiled ball query only supports `brute`")
        n_centers = center_ids.shape[0]
        out = np.empty((n_centers, k), dtype=np.int64)
        counts = np.empty(n_centers, dtype=np.int64)
        get_kernels(context).gam_ball_query(
            n_centers=n_centers,
            n_points=cloud.n_points,
            k=k,
            r2=r2,
            coords=coords,
            center_ids=center_ids,
            out=out,
            counts=counts,
        )
    elif method == "grid":
        grid = GridIndex(coords, cell_size=r)
        log.debug(f"Grid ball query on {grid.shape} cells")
        rows = []
        for cc in center_ids:
            cand = grid.candidates(cc, r)
            diff = coords[cand] - coords[cc]
            d2 = (
                diff[:, 0] * diff[:, 0]
                + diff[:, 1] * diff[:, 1]
                + diff[:, 2] * diff[:, 2]
            )
            rows.append(cand[d2 <= r2])
        out, counts = _pad_rows(rows, k)
    else:
        rows = [
            np.flatnonzero(squared_distances(coords, cc) <= r2)
            for cc in center_ids
        ]
        out, counts = _pad_rows(rows, k)

    empty = counts == 0
    if np.any(empty):
        raise EmptyBall(
            f"{int(empty.sum())} center(s) have no point within r={r}",
            center_ids=center_ids[empty],
        )
    return NeighborhoodIndex(center_ids=center_ids, neighbor_ids=out)


def knn(cloud, centers, k, context=None):
    """The ``k`` nearest points of every center, nearest first, ties going
    to the lowest index."""
    center_ids = as_center_ids(centers, cloud.n_points)
    if k < 1:
        raise InvalidInput(f"k must be >= 1, got {k}")
    if k > cloud.n_points:
        raise KTooLarge(
            f"k={k} exceeds the number of points {cloud.n_points}"
        )

    n_centers = center_ids.shape[0]
    if context is not None:
        out = np.empty((n_centers, k), dtype=np.int64)
        get_kernels(context).gam_knn(
            n_centers=n_centers,
            n_points=cloud.n_points,
            k=k,
            coords=cloud.coords,
            center_ids=center_ids,
            best_d2=np.empty((n_centers, k)),
            out=out,
        )
    else:
        out = np.stack(
            [
                np.argsort(
                    squared_distances(cloud.coords, cc), kind="stable"
                )[:k]
                for cc in center_ids
            ]
        ).astype(np.int64)
    return NeighborhoodIndex(center_ids=center_ids, neighbor_ids=out)


def support_neighborhoods(cloud, nbrs, k, context=None):
    """Fitting support of every neighbor: its ``k`` nearest cloud points.

    Returns an int64 array of shape ``(N_s, K, k)``.
    """
    unique_ids, inverse = np.unique(nbrs.neighbor_ids, return_inverse=True)
    table = knn(cloud, unique_ids, k, context=context).neighbor_ids
    return np.ascontiguousarray(
        table[inverse.reshape(-1)].reshape(nbrs.neighbor_ids.shape + (k,))
    )
