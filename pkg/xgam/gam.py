# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

"""
The gradient attention layer.

For every center ``s`` and neighbor ``j``:

* attention ``a = sigmoid(W2 relu(W1 v + b1) + b2)`` with ``v = [g ; d]``
  (the enabled subset, gradient first);
* extractor ``phi = relu([phi_w | phi_w_delta] [f_nbr ; f_nbr - f_center]
  + phi_b)``;
* output ``relu(out_w ((lambda a phi + phi) / (1 + lambda)) + out_b)``,
  max-pooled over the neighbors.

All of it is evaluated on an autodiff ``Tape``; the public functions run a
throwaway tape with constant parameters, training code records the
parameters as leaves. Geometry (``g`` and ``d``) never carries gradients.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .core import (
    EdgeGeometry,
    GamParams,
    InvalidInput,
    NeighborhoodIndex,
    ShapeMismatch,
    _check_finite,
    _frozen,
    validate_cloud,
)
from .geometry import edge_geometry
from .sampling import ball_query, farthest_point_sample

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AttentionMatrix:
    """Attention weight of every edge, strictly inside (0, 1)."""

    a: np.ndarray

    def __post_init__(self):
        a = _frozen(self.a)
        _check_finite("a", a)
        if np.any(a <= 0) or np.any(a >= 1):
            raise InvalidInput("attention weights must lie in (0, 1)")
        object.__setattr__(self, "a", a)


@dataclass(frozen=True, eq=False)
class NeighborFeatures:
    f: np.ndarray

    def __post_init__(self):
        f = _frozen(self.f)
        if f.ndim != 3:
            raise ShapeMismatch(
                f"expected N_s x K x C features, got {f.shape}"
            )
        _check_finite("f", f)
        object.__setattr__(self, "f", f)

    @classmethod
    def gather(cls, features, nbrs):
        return cls(f=np.asarray(features)[nbrs.neighbor_ids])


@dataclass(frozen=True, eq=False)
class OutputFeatures:
    """Per-edge outputs ``f_out`` and their max over neighbors ``pooled``.

    ``nbrs`` is the neighborhood the layer ran on, when known.
    """

    f_out: np.ndarray
    pooled: np.ndarray
    nbrs: Optional[NeighborhoodIndex] = None

    @property
    def n_channels(self):
        return self.pooled.shape[-1]


@dataclass(frozen=True, eq=False)
class LayerGeometry:
    """Neighborhoods and edge geometry of one layer on one cloud."""

    nbrs: NeighborhoodIndex
    edges: EdgeGeometry


def param_vars(tape, params, trainable=False, prefix=""):
    """Record ``params`` on ``tape``, as parameters when ``trainable``."""
    out = {}
    for name, arr in params.as_dict().items():
        if trainable:
            out[name] = tape.parameter(prefix + name, arr)
        else:
            out[name] = tape.constant(arr)
    return out


def prepare_geometry(cloud, config, context=None):
    """Sample centers, search neighbors and measure the edges of ``cloud``."""
    centers = farthest_point_sample(
        cloud, config.n_centers, seed=config.seed, context=context
    )
    nbrs = ball_query(
        cloud, centers, config.radius, config.k_neighbors, context=context
    )
    edges = edge_geometry(cloud, nbrs, eps=config.epsilon, context=context)
    return LayerGeometry(nbrs=nbrs, edges=edges)


def _check_lambda(lambda_):
    if not np.isfinite(lambda_) or lambda_ < 0:
        raise InvalidInput(f"lambda must be >= 0, got {lambda_}")


class GamLayer:
    """One gradient attention layer evaluated on a tape.

    With ``gam_enabled=False``, or both attention inputs disabled in the
    config, attention is bypassed and the extractor output goes straight to
    the output MLP.
    """

    def __init__(
        self, config, phi: Optional[Callable] = None, gam_enabled=True
    ):
        self.config = config
        self.phi = phi
        self.gam_enabled = gam_enabled

    @property
    def bypass(self):
        return not (self.gam_enabled and self.config.attention_enabled)

    def attention_inputs(self, tape, edges):
        cfg = self.config
        columns = []
        if cfg.use_gradient:
            columns.append(edges.grad)
        if cfg.use_distance:
            dist = edges.dist
            if cfg.normalize_distance:
                dist = dist / cfg.radius
            columns.append(dist)
        return tape.constant(np.stack(columns, axis=-1))

    def attention(self, tape, edges, pv):
        if self.bypass:
            return None
        v = self.attention_inputs(tape, edges)
        if v.shape[-1] != pv["attn_w1"].shape[1]:
            raise ShapeMismatch(
                f"attention MLP expects {pv['attn_w1'].shape[1]} inputs, "
                f"config enables {v.shape[-1]}"
            )
        hidden = ad.relu(ad.affine(v, pv["attn_w1"], pv["attn_b1"]))
        logit = ad.affine(hidden, pv["attn_w2"], pv["attn_b2"])
        return ad.squeeze(ad.sigmoid(logit), axis=-1)

    def extract(self, tape, f_nbr, f_center, pv):
        delta = ad.sub(f_nbr, ad.expand_dims(f_center, 1))
        w = ad.concat([pv["phi_w"], pv["phi_w_delta"]], axis=1)
        x = ad.concat([f_nbr, delta], axis=-1)
        return ad.relu(ad.affine(x, w, pv["phi_b"]))

    def aggregate(self, tape, phi, attn, pv, lambda_=None):
        lambda_ = self.config.lambda_ if lambda_ is None else lambda_
        _check_lambda(lambda_)
        if attn is None:
            mixed = phi
        else:
            # (lambda a phi + phi) / (1 + lambda) as a per-edge coefficient
            coef = ad.div_scalar(
                ad.add_scalar(ad.scale(attn, lambda_), 1.0), 1.0 + lambda_
            )
            mixed = ad.mul(phi, ad.expand_dims(coef, -1))
        f_out = ad.relu(ad.affine(mixed, pv["out_w"], pv["out_b"]))
        return f_out, ad.max(f_out, axis=1)

    def forward(self, tape, features, geometry, pv):
        """``features`` is an N x C Var; returns the f_out and pooled Vars."""
        nbrs = geometry.nbrs
        f_nbr = ad.take(features, nbrs.neighbor_ids)
        f_center = ad.take(features, nbrs.center_ids)
        if self.phi is None:
            phi = self.extract(tape, f_nbr, f_center, pv)
        else:
            phi = tape.constant(
                self.phi(
                    NeighborFeatures(f=f_nbr.value),
                    f_center.value,
                    _params_of(pv),
                )
            )
        attn = self.attention(tape, geometry.edges, pv)
        return self.aggregate(tape, phi, attn, pv)


def _params_of(pv):
    return GamParams(**{name: var.value for name, var in pv.items()})


def attention_weights(edges, params, config):
    """Attention weight of every edge of ``edges``."""
    if not config.attention_enabled:
        raise InvalidInput("attention is disabled in the config")
    params.check_config(config)
    tape = ad.Tape()
    layer = GamLayer(config)
    a = layer.attention(tape, edges, param_vars(tape, params))
    return AttentionMatrix(a=a.value)


def default_phi(features, center_features, params):
    """Edge extractor on ``[f_nbr ; f_nbr - f_center]`` followed by relu."""
    f = features.f if isinstance(features, NeighborFeatures) else features
    f = np.asarray(f, dtype=np.float64)
    center = np.asarray(center_features, dtype=np.float64)
    if center.shape != (f.shape[0], f.shape[2]):
        raise ShapeMismatch(
            f"center features must have shape {(f.shape[0], f.shape[2])}, "
            f"got {center.shape}"
        )
    if f.shape[2] != params.n_channels_in:
        raise ShapeMismatch(
            f"features have {f.shape[2]} channels, extractor expects "
            f"{params.n_channels_in}"
        )
    tape = ad.Tape()
    layer = GamLayer(config=None)
    phi = layer.extract(
        tape, tape.constant(f), tape.constant(center), param_vars(tape, params)
    )
    return phi.value


def aggregate(phi_out, attn, params, lambda_):
    """Blend ``phi_out`` with its attention weighted copy, apply the output
    MLP and pool over neighbors.

    ``attn`` is an ``AttentionMatrix``, a raw N_s x K array, or None for
    weights fixed to one.
    """
    _check_lambda(lambda_)
    phi_out = np.asarray(phi_out, dtype=np.float64)
    if phi_out.ndim != 3 or phi_out.shape[2] != params.out_w.shape[1]:
        raise ShapeMismatch(
            f"phi output {phi_out.shape} does not match the output MLP "
            f"{params.out_w.shape}"
        )
    tape = ad.Tape()
    layer = GamLayer(config=None)
    attn_var = None
    if attn is not None:
        a = attn.a if isinstance(attn, AttentionMatrix) else np.asarray(attn)
        if a.shape != phi_out.shape[:2]:
            raise ShapeMismatch(
                f"attention {a.shape} does not match phi {phi_out.shape[:2]}"
            )
        attn_var = tape.constant(a)
    f_out, pooled = layer.aggregate(
        tape,
        tape.constant(phi_out),
        attn_var,
        param_vars(tape, params),
        lambda_=lambda_,
    )
    return OutputFeatures(
        f_out=_frozen(f_out.value), pooled=_frozen(pooled.value)
    )


def gam_forward(
    cloud, config, params, phi=None, gam_enabled=True, context=None
):
    """Sample, group, measure, attend, extract and aggregate one cloud.

    ``phi`` replaces the default extractor: any callable
    ``phi(neighbor_features, center_features, params) -> N_s x K x C_out``.
    """
    if cloud.features is None:
        raise InvalidInput("gam_forward needs a cloud with features")
    params.check_config(config)
    if cloud.n_channels != params.n_channels_in:
        raise ShapeMismatch(
            f"cloud has {cloud.n_channels} channels, params expect "
            f"{params.n_channels_in}"
        )
    geometry = prepare_geometry(cloud, config, context=context)
    tape = ad.Tape()
    layer = GamLayer(config, phi=phi, gam_enabled=gam_enabled)
    f_out, pooled = layer.forward(
        tape, tape.constant(cloud.features), geometry, param_vars(tape, params)
    )
    return OutputFeatures(
        f_out=_frozen(f_out.value),
        pooled=_frozen(pooled.value),
        nbrs=geometry.nbrs,
    )


def gam_layers(cloud, configs, params_list, context=None):
    """Stack layers: each samples the centers of the previous one and
    consumes its pooled features. Returns one ``OutputFeatures`` per layer.
    """
    if len(configs) != len(params_list) or not configs:
        raise InvalidInput("need one params set per config, at least one")
    outputs = []
    for ii, (config, params) in enumerate(zip(configs, params_list)):
        out = gam_forward(cloud, config, params, context=context)
        log.debug(
            f"layer {ii}: {cloud.n_points} -> {out.nbrs.n_centers} points, "
            f"{out.n_channels} channels"
        )
        outputs.append(out)
        cloud = validate_cloud(cloud.coords[out.nbrs.center_ids], out.pooled)
    return outputs
