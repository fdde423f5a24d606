# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

"""
Per-edge geometry of neighborhoods and the covariance normal baseline.

For an edge from center ``p`` to neighbor ``q`` with ``(x, y, z) = q - p``,
``rho = sqrt(x^2 + y^2)`` and ``d = sqrt(x^2 + y^2 + z^2)``, the scalar
gradient is ``(z / d) * ((x + y) / rho)``: the sine of the elevation of the
edge times the sum of cosine and sine of its azimuth. Edges with
``rho <= eps`` or ``d <= eps`` have no azimuth and get zero gradient.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .core import (
    DEFAULT_EPSILON,
    DegenerateNeighborhood,
    EdgeGeometry,
    InvalidInput,
    ShapeMismatch,
    _frozen,
)
from .kernels import get_kernels
from .sampling import support_neighborhoods

log = logging.getLogger(__name__)

# l2 <= EIGEN_REL_TOL * l1 means the covariance has rank < 2. The
# closed-form eigenvalues near a double root are only accurate to about
# sqrt(machine eps) * l1, so the tolerance must stay well above 1.5e-8.
EIGEN_REL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class GradientVectorSet:
    g: np.ndarray
    defined_mask: np.ndarray


@dataclass(frozen=True, eq=False)
class DepthGradientSet:
    dzdx: np.ndarray
    dzdy: np.ndarray
    defined_mask: np.ndarray


@dataclass(frozen=True, eq=False)
class NormalSet:
    """Unit normals (z >= 0) per neighborhood, zero where undefined."""

    normals: np.ndarray
    defined_mask: np.ndarray

    @property
    def n_defined(self):
        return int(self.defined_mask.sum())


def _check_eps(eps):
    if not eps > 0:
        raise InvalidInput(f"epsilon must be > 0, got {eps}")


def _split(rel):
    rel = np.asarray(rel, dtype=np.float64)
    if rel.shape[-1:] != (3,):
        raise ShapeMismatch(f"rel must end with a 3 axis, got {rel.shape}")
    return rel[..., 0], rel[..., 1], rel[..., 2]


def _planar_and_length(x, y, z):
    rho = np.sqrt(x * x + y * y)
    dist = np.sqrt(x * x + y * y + z * z)
    return rho, dist


def scalar_gradient(rel, eps=DEFAULT_EPSILON):
    """Scalar gradient of every relative vector in ``rel`` (``... x 3``)."""
    _check_eps(eps)
    x, y, z = _split(rel)
    rho, dist = _planar_and_length(x, y, z)
    defined = (rho > eps) & (dist > eps)
    safe_rho = np.where(defined, rho, 1.0)
    safe_dist = np.where(defined, dist, 1.0)
    return np.where(defined, (z / safe_dist) * ((x + y) / safe_rho), 0.0)


def edge_geometry(cloud, nbrs, eps=DEFAULT_EPSILON, context=None):
    """Relative vectors, lengths and scalar gradients of every edge."""
    _check_eps(eps)
    nbrs.check_bounds(cloud.n_points)

    if context is not None:
        n_edges = nbrs.neighbor_ids.size
        rel = np.empty((n_edges, 3))
        dist = np.empty(n_edges)
        grad = np.empty(n_edges)
        get_kernels(context).gam_edge_geometry(
            n_edges=n_edges,
            coords=cloud.coords,
            edge_center=np.repeat(nbrs.center_ids, nbrs.k),
            edge_neighbor=np.ascontiguousarray(nbrs.neighbor_ids.reshape(-1)),
            eps=eps,
            rel=rel,
            dist=dist,
            grad=grad,
        )
        shape = nbrs.neighbor_ids.shape
        return EdgeGeometry(
            rel=rel.reshape(shape + (3,)),
            dist=dist.reshape(shape),
            grad=grad.reshape(shape),
        )

    coords = cloud.coords
    rel = coords[nbrs.neighbor_ids] - coords[nbrs.center_ids][:, None, :]
    x, y, z = _split(rel)
    _, dist = _planar_and_length(x, y, z)
    return EdgeGeometry(rel=rel, dist=dist, grad=scalar_gradient(rel, eps))


def gradient_vectors(edges, raw_rel=None, eps=DEFAULT_EPSILON):
    """Unit gradient vectors ``((z/d) x/rho, (z/d) y/rho, rho/d)``.

    ``edges`` is an ``EdgeGeometry`` or an array of relative vectors;
    ``raw_rel``, when given, replaces the vectors stored in ``edges``.
    """
    _check_eps(eps)
    rel = edges.rel if isinstance(edges, EdgeGeometry) else edges
    if raw_rel is not None:
        raw_rel = np.asarray(raw_rel, dtype=np.float64)
        if raw_rel.shape != np.shape(rel):
            raise ShapeMismatch(
                f"raw_rel has shape {raw_rel.shape}, edges {np.shape(rel)}"
            )
        rel = raw_rel

    x, y, z = _split(rel)
    rho, dist = _planar_and_length(x, y, z)
    defined = (rho > eps) & (dist > eps)
    safe_rho = np.where(defined, rho, 1.0)
    safe_dist = np.where(defined, dist, 1.0)
    sin_elev = z / safe_dist
    g = np.stack(
        [
            sin_elev * (x / safe_rho),
            sin_elev * (y / safe_rho),
            rho / safe_dist,
        ],
        axis=-1,
    )
    g = np.where(defined[..., None], g, 0.0)
    return GradientVectorSet(g=_frozen(g), defined_mask=_frozen(defined, bool))


def depth_gradients(raw_rel, eps=DEFAULT_EPSILON):
    """Depth slopes ``x z / rho^2`` and ``y z / rho^2``, masked where
    ``rho^2 <= eps^2``."""
    _check_eps(eps)
    x, y, z = _split(raw_rel)
    rho2 = x * x + y * y
    defined = rho2 > eps * eps
    safe_rho2 = np.where(defined, rho2, 1.0)
    return DepthGradientSet(
        dzdx=_frozen(np.where(defined, x * z / safe_rho2, 0.0)),
        dzdy=_frozen(np.where(defined, y * z / safe_rho2, 0.0)),
        defined_mask=_frozen(defined, bool),
    )


def zenith_azimuth(rel):
    """Elevation above the xy plane and azimuth of every vector, radians."""
    x, y, z = _split(rel)
    return np.arctan2(z, np.sqrt(x * x + y * y)), np.arctan2(y, x)


def _eig3(a):
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-2:] != (3, 3):
        raise ShapeMismatch(f"expected (..., 3, 3) matrices, got {a.shape}")
    a00, a11, a22 = a[..., 0, 0], a[..., 1, 1], a[..., 2, 2]
    a01, a02, a12 = a[..., 0, 1], a[..., 0, 2], a[..., 1, 2]

    p1 = a01 * a01 + a02 * a02 + a12 * a12
    q = (a00 + a11 + a22) / 3.0
    b00, b11, b22 = a00 - q, a11 - q, a22 - q
    p2 = b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * p1
    p = np.sqrt(p2 / 6.0)

    safe_p = np.where(p > 0, p, 1.0)
    c00, c11, c22 = b00 / safe_p, b11 / safe_p, b22 / safe_p
    c01, c02, c12 = a01 / safe_p, a02 / safe_p, a12 / safe_p
    r = (
        c00 * (c11 * c22 - c12 * c12)
        - c01 * (c01 * c22 - c12 * c02)
        + c02 * (c01 * c12 - c11 * c02)
    ) / 2.0
    r = np.clip(r, -1.0, 1.0)

    phi = np.arccos(r) / 3.0
    l1 = q + 2.0 * p * np.cos(phi)
    l3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    l2 = 3.0 * q - l1 - l3
    return l1, l2, l3, p


def symmetric_eigvals3(a):
    """Closed-form eigenvalues of symmetric 3x3 matrices, descending."""
    l1, l2, l3, _ = _eig3(a)
    return np.stack([l1, l2, l3], axis=-1)


def smallest_eigvec3(a, rel_tol=EIGEN_REL_TOL):
    """Unit eigenvector of the smallest eigenvalue (z >= 0) and its mask.

    The mask is False where the matrix has rank < 2, in which case the
    returned vector is zero.
    """
    a = np.asarray(a, dtype=np.float64)
    l1, l2, l3, p = _eig3(a)
    defined = (p > 0) & (l1 > 0) & ~(l2 <= rel_tol * l1)

    a00, a11, a22 = a[..., 0, 0], a[..., 1, 1], a[..., 2, 2]
    a01, a02, a12 = a[..., 0, 1], a[..., 0, 2], a[..., 1, 2]
    m00, m11, m22 = a00 - l3, a11 - l3, a22 - l3
    # cross products of the rows of a - l3 * I
    cross = np.stack(
        [
            np.stack(
                [
                    a01 * a12 - a02 * m11,
                    a02 * a01 - m00 * a12,
                    m00 * m11 - a01 * a01,
                ],
                axis=-1,
            ),
            np.stack(
                [
                    a01 * m22 - a02 * a12,
                    a02 * a02 - m00 * m22,
                    m00 * a12 - a01 * a02,
                ],
                axis=-1,
            ),
            np.stack(
                [
                    m11 * m22 - a12 * a12,
                    a12 * a02 - a01 * m22,
                    a01 * a12 - m11 * a02,
                ],
                axis=-1,
            ),
        ],
        axis=-2,
    )
    n2 = (
        cross[..., 0] * cross[..., 0]
        + cross[..., 1] * cross[..., 1]
        + cross[..., 2] * cross[..., 2]
    )
    best = np.argmax(n2, axis=-1)
    vec = np.take_along_axis(cross, best[..., None, None], axis=-2)[..., 0, :]
    best_n2 = np.take_along_axis(n2, best[..., None], axis=-1)[..., 0]
    defined &= best_n2 > 0

    norm = np.sqrt(np.where(defined, best_n2, 1.0))
    sign = np.where(vec[..., 2] < 0, -1.0, 1.0)
    vec = sign[..., None] * (vec / norm[..., None])
    vec = np.where(defined[..., None], vec, 0.0)
    return vec, defined


def pca_normals(
    cloud,
    nbrs,
    support=None,
    k_support=None,
    strict=False,
    rel_tol=EIGEN_REL_TOL,
    context=None,
):
    """Covariance normal of the neighborhood of every neighbor point.

    ``support`` (``N_s x K x k``) lists the points fitted for each
    ``(s, j)``; by default the ``k_support`` (default K) nearest points of
    every neighbor, see ``support_neighborhoods``.

    Raises:
        DegenerateNeighborhood: with ``strict=True``, when some support has
            a rank < 2 covariance. Otherwise such entries are masked.
    """
    nbrs.check_bounds(cloud.n_points)
    if support is None:
        k_support = nbrs.k if k_support is None else k_support
        k_support = min(k_support, cloud.n_points)
        support = support_neighborhoods(
            cloud, nbrs, k_support, context=context
        )
    support = np.ascontiguousarray(support, dtype=np.int64)
    if support.ndim != 3 or support.shape[:2] != nbrs.neighbor_ids.shape:
        raise ShapeMismatch(
            f"support must have shape {nbrs.neighbor_ids.shape} + (k,), "
            f"got {support.shape}"
        )
    if support.min() < 0 or support.max() >= cloud.n_points:
        raise InvalidInput("support ids out of range")

    if context is not None:
        n_edges = support.shape[0] * support.shape[1]
        normals = np.empty((n_edges, 3))
        defined = np.empty(n_edges, dtype=np.uint8)
        get_kernels(context).gam_pca_normals(
            n_edges=n_edges,
            k_support=support.shape[2],
            coords=cloud.coords,
            support=support,
            rel_tol=rel_tol,
            normals=normals,
            defined=defined,
        )
        normals = normals.reshape(support.shape[:2] + (3,))
        defined = defined.reshape(support.shape[:2]).astype(bool)
    else:
        pts = cloud.coords[support]
        dev = pts - pts.mean(axis=-2, keepdims=True)
        cov = np.einsum("...ki,...kj->...ij", dev, dev) / support.shape[2]
        normals, defined = smallest_eigvec3(cov, rel_tol)

    if strict and not np.all(defined):
        raise DegenerateNeighborhood(
            f"{int((~defined).sum())} neighborhood(s) have a rank < 2 "
            "covariance"
        )
    return NormalSet(
        normals=_frozen(normals), defined_mask=_frozen(defined, bool)
    )
