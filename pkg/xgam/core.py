# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

"""
Domain types shared by every module.

All arithmetic is carried out in float64. Arrays stored in the types below
are private read-only copies, so instances can be shared freely.
"""

import logging
from dataclasses import dataclass, fields, replace
from typing import Dict, Optional

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-8


class GamError(Exception):
    """Base class of the errors raised by xgam."""


class InvalidInput(GamError, ValueError):
    pass


class NonFinite(InvalidInput):
    pass


class ShapeMismatch(InvalidInput):
    pass


class TooManyCenters(InvalidInput):
    pass


class KTooLarge(InvalidInput):
    pass


class EmptyBall(GamError, ValueError):
    """No point lies within the query radius of a center."""

    def __init__(self, message, center_ids=()):
        super().__init__(message)
        self.center_ids = tuple(int(cc) for cc in center_ids)


class DegenerateNeighborhood(GamError, ValueError):
    pass


class NonScalarLoss(GamError, ValueError):
    pass


class DivergedLoss(GamError, ArithmeticError):
    pass


class ParseError(GamError, ValueError):
    pass


class InconsistentColumns(ParseError):
    pass


def _frozen(arr, dtype=np.float64):
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"`{name}` contains NaN or Inf values")


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N points with optional N x C features, built by ``validate_cloud``."""

    coords: np.ndarray
    features: Optional[np.ndarray] = None

    @property
    def n_points(self):
        return self.coords.shape[0]

    @property
    def n_channels(self):
        return 0 if self.features is None else self.features.shape[1]

    def with_features(self, features):
        return validate_cloud(self.coords, features)

    def __repr__(self):
        return (
            f"PointCloud(n_points={self.n_points}, "
            f"n_channels={self.n_channels})"
        )


def validate_cloud(coords, features=None):
    """Check ``coords`` (N x 3) and ``features`` (N x C) and build a cloud.

    Raises:
        InvalidInput: empty cloud or wrong number of coordinate columns.
        NonFinite: NaN or Inf anywhere in the input.
        ShapeMismatch: feature rows differ from the number of points.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise InvalidInput(
            f"coords must have shape (N, 3), got {coords.shape}"
        )
    if coords.shape[0] < 1:
        raise InvalidInput("A point cloud needs at least one point")
    _check_finite("coords", coords)

    if features is not None:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim == 1:
            features = features[:, None]
        if features.ndim != 2 or features.shape[0] != coords.shape[0]:
            raise ShapeMismatch(
                f"features must have {coords.shape[0]} rows, "
                f"got shape {features.shape}"
            )
        _check_finite("features", features)
        features = _frozen(features)

    return PointCloud(coords=_frozen(coords), features=features)


@dataclass(frozen=True, eq=False)
class NeighborhoodIndex:
    """N_s centers with K neighbor indices each (rows may repeat indices)."""

    center_ids: np.ndarray
    neighbor_ids: np.ndarray

    def __post_init__(self):
        center_ids = _frozen(self.center_ids, dtype=np.int64)
        neighbor_ids = _frozen(self.neighbor_ids, dtype=np.int64)
        if center_ids.ndim != 1 or center_ids.shape[0] < 1:
            raise ShapeMismatch("center_ids must be a non-empty 1D array")
        if (
            neighbor_ids.ndim != 2
            or neighbor_ids.shape[0] != center_ids.shape[0]
            or neighbor_ids.shape[1] < 1
        ):
            raise ShapeMismatch(
                f"neighbor_ids must have shape ({center_ids.shape[0]}, K>=1),"
                f" got {neighbor_ids.shape}"
            )
        object.__setattr__(self, "center_ids", center_ids)
        object.__setattr__(self, "neighbor_ids", neighbor_ids)

    @property
    def n_centers(self):
        return self.center_ids.shape[0]

    @property
    def k(self):
        return self.neighbor_ids.shape[1]

    def check_bounds(self, n_points):
        for name in ("center_ids", "neighbor_ids"):
            ids = getattr(self, name)
            if ids.min() < 0 or ids.max() >= n_points:
                raise InvalidInput(
                    f"{name} out of range for a cloud of {n_points} points"
                )


@dataclass(frozen=True, eq=False)
class EdgeGeometry:
    """Relative vectors, lengths and scalar gradients of every (s, j) edge."""

    rel: np.ndarray
    dist: np.ndarray
    grad: np.ndarray

    def __post_init__(self):
        for name in ("rel", "dist", "grad"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.rel.shape[-1] != 3 or self.rel.shape[:-1] != self.dist.shape:
            raise ShapeMismatch("rel must have shape dist.shape + (3,)")
        if self.grad.shape != self.dist.shape:
            raise ShapeMismatch("grad and dist must have the same shape")

    @property
    def shape(self):
        return self.dist.shape


@dataclass(frozen=True)
class GamConfig:
    """Settings of one gradient attention layer.

    ``lambda_`` is the balance weight of the attention-weighted features;
    ``use_distance``/``use_gradient`` select the attention inputs, with both
    off meaning attention is bypassed.
    """

    lambda_: float = 1.0
    radius: float = 0.2
    n_centers: int = 512
    k_neighbors: int = 32
    epsilon: float = DEFAULT_EPSILON
    use_distance: bool = True
    use_gradient: bool = True
    mlp_hidden: int = 16
    seed: int = 0
    normalize_distance: bool = False

    def __post_init__(self):
        if not np.isfinite(self.lambda_) or self.lambda_ < 0:
            raise InvalidInput(f"lambda must be >= 0, got {self.lambda_}")
        if not self.radius > 0:
            raise InvalidInput(f"radius must be > 0, got {self.radius}")
        if not self.epsilon > 0:
            raise InvalidInput(f"epsilon must be > 0, got {self.epsilon}")
        if self.n_centers < 1 or self.k_neighbors < 1:
            raise InvalidInput("n_centers and k_neighbors must be >= 1")
        if self.mlp_hidden < 1:
            raise InvalidInput("mlp_hidden must be >= 1")
        if self.seed < 0:
            raise InvalidInput("seed must be unsigned")

    @property
    def attention_enabled(self):
        return self.use_distance or self.use_gradient

    @property
    def attention_inputs(self):
        """Number of attention MLP inputs, gradient first then distance."""
        return int(self.use_gradient) + int(self.use_distance)

    def replace(self, **kwargs):
        return replace(self, **kwargs)

    def to_dict(self):
        out = {ff.name: getattr(self, ff.name) for ff in fields(self)}
        out["lambda"] = out.pop("lambda_")
        return out

    @classmethod
    def from_dict(cls, dct):
        dct = dict(dct)
        if "lambda" in dct:
            dct["lambda_"] = dct.pop("lambda")
        return cls(**dct)


_PARAM_NAMES = (
    "attn_w1",
    "attn_b1",
    "attn_w2",
    "attn_b2",
    "phi_w",
    "phi_w_delta",
    "phi_b",
    "out_w",
    "out_b",
)


@dataclass(frozen=True, eq=False)
class GamParams:
    """Weights of the attention MLP, of the default extractor and of the
    output MLP.

    The extractor acts on ``[f_nbr ; f_nbr - f_center]``: ``phi_w`` is the
    block applied to ``f_nbr`` and ``phi_w_delta`` the block applied to the
    difference, both C_out x C.
    """

    attn_w1: np.ndarray
    attn_b1: np.ndarray
    attn_w2: np.ndarray
    attn_b2: np.ndarray
    phi_w: np.ndarray
    phi_w_delta: np.ndarray
    phi_b: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    def __post_init__(self):
        for name in _PARAM_NAMES:
            arr = _frozen(getattr(self, name))
            _check_finite(name, arr)
            object.__setattr__(self, name, arr)

        hidden = self.attn_w1.shape[0]
        c_out, c_in = self.phi_w.shape
        expected = {
            "attn_b1": (hidden,),
            "attn_w2": (1, hidden),
            "attn_b2": (1,),
            "phi_w_delta": (c_out, c_in),
            "phi_b": (c_out,),
            "out_w": (c_out, c_out),
            "out_b": (c_out,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeMismatch(
                    f"{name} must have shape {shape}, "
                    f"got {getattr(self, name).shape}"
                )

    @property
    def n_channels_in(self):
        return self.phi_w.shape[1]

    @property
    def n_channels_out(self):
        return self.phi_w.shape[0]

    @property
    def attention_inputs(self):
        return self.attn_w1.shape[1]

    def check_config(self, config):
        if self.attn_w1.shape != (config.mlp_hidden, config.attention_inputs):
            raise ShapeMismatch(
                f"attention weights {self.attn_w1.shape} do not match the "
                f"config ({config.mlp_hidden}, {config.attention_inputs})"
            )

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _PARAM_NAMES}

    def replace(self, **arrays):
        return replace(self, **arrays)

    def to_dict(self):
        return {name: arr.tolist() for name, arr in self.as_dict().items()}

    @classmethod
    def from_dict(cls, dct):
        return cls(**{name: np.asarray(dct[name]) for name in _PARAM_NAMES})


def _uniform(rng, shape, fan_in):
    if fan_in == 0:
        return np.zeros(shape)
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config, n_channels_in, n_channels_out, seed=None):
    """Deterministic parameters: weights uniform in +-1/sqrt(fan_in),
    biases zero. ``seed`` defaults to ``config.seed``.
    """
    if n_channels_in < 1 or n_channels_out < 1:
        raise InvalidInput("channel counts must be >= 1")
    if seed is None:
        seed = config.seed
    rng = np.random.default_rng(seed)
    hidden = config.mlp_hidden
    d_in = config.attention_inputs
    c_in, c_out = n_channels_in, n_channels_out

    return GamParams(
        attn_w1=_uniform(rng, (hidden, d_in), d_in),
        attn_b1=np.zeros(hidden),
        attn_w2=_uniform(rng, (1, hidden), hidden),
        attn_b2=np.zeros(1),
        # the extractor is one affine map on 2*C inputs split in two blocks
        phi_w=_uniform(rng, (c_out, c_in), 2 * c_in),
        phi_w_delta=_uniform(rng, (c_out, c_in), 2 * c_in),
        phi_b=np.zeros(c_out),
        out_w=_uniform(rng, (c_out, c_out), c_out),
        out_b=np.zeros(c_out),
    )
