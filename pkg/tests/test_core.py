# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

import json

import numpy as np
import pytest

import xgam as xg


def test_validate_cloud_minimal():
    cloud = xg.validate_cloud(np.eye(3))
    assert cloud.n_points == 3
    assert cloud.n_channels == 0
    assert cloud.features is None


def test_validate_cloud_with_features():
    cloud = xg.validate_cloud(np.zeros((4, 3)), np.ones((4, 8)))
    assert cloud.n_points == 4
    assert cloud.n_channels == 8


def test_validate_cloud_rejects_nan():
    coords = np.zeros((3, 3))
    coords[1, 2] = np.nan
    with pytest.raises(xg.NonFinite):
        xg.validate_cloud(coords)


def test_validate_cloud_rejects_inf_feature():
    features = np.zeros((2, 1))
    features[0, 0] = np.inf
    with pytest.raises(xg.NonFinite):
        xg.validate_cloud(np.zeros((2, 3)), features)


def test_validate_cloud_shape_errors():
    with pytest.raises(xg.ShapeMismatch):
        xg.validate_cloud(np.zeros((4, 3)), np.ones((3, 2)))
    with pytest.raises(xg.InvalidInput):
        xg.validate_cloud(np.zeros((0, 3)))
    with pytest.raises(xg.InvalidInput):
        xg.validate_cloud(np.zeros((4, 2)))
    # errors are value errors for callers that do not know xgam
    with pytest.raises(ValueError):
        xg.validate_cloud(np.zeros((4, 2)))


def test_cloud_is_read_only_copy():
    coords = np.zeros((2, 3))
    cloud = xg.validate_cloud(coords)
    coords[0, 0] = 5.0
    assert cloud.coords[0, 0] == 0.0
    with pytest.raises(ValueError):
        cloud.coords[0, 0] = 1.0


def test_one_dimensional_features_become_a_column():
    cloud = xg.validate_cloud(np.zeros((3, 3)), np.arange(3.0))
    assert cloud.features.shape == (3, 1)


def test_neighborhood_index():
    nbrs = xg.NeighborhoodIndex(
        center_ids=[0, 2], neighbor_ids=[[0, 1, 1], [2, 2, 2]]
    )
    assert nbrs.n_centers == 2
    assert nbrs.k == 3
    assert nbrs.neighbor_ids.dtype == np.int64
    nbrs.check_bounds(3)
    with pytest.raises(xg.InvalidInput):
        nbrs.check_bounds(2)
    with pytest.raises(xg.ShapeMismatch):
        xg.NeighborhoodIndex(center_ids=[0, 1], neighbor_ids=[[0, 1]])


def test_edge_geometry_shapes():
    with pytest.raises(xg.ShapeMismatch):
        xg.EdgeGeometry(
            rel=np.zeros((2, 3, 3)),
            dist=np.zeros((2, 2)),
            grad=np.zeros((2, 2)),
        )


def test_config_defaults_and_validation():
    config = xg.GamConfig()
    assert config.lambda_ == 1.0
    assert config.mlp_hidden == 16
    assert config.attention_inputs == 2
    assert not config.normalize_distance
    assert config.replace(use_distance=False).attention_inputs == 1

    off = config.replace(use_distance=False, use_gradient=False)
    assert not off.attention_enabled
    assert off.attention_inputs == 0

    for bad in (
        dict(lambda_=-1.0),
        dict(epsilon=0.0),
        dict(radius=0.0),
        dict(k_neighbors=0),
        dict(seed=-1),
    ):
        with pytest.raises(xg.InvalidInput):
            xg.GamConfig(**bad)


def test_config_dict_round_trip():
    config = xg.GamConfig(lambda_=0.5, radius=0.3, use_gradient=False)
    dct = config.to_dict()
    assert dct["lambda"] == 0.5
    assert "lambda_" not in dct
    json.dumps(dct)
    assert xg.GamConfig.from_dict(dct) == config


def test_init_params_shapes():
    config = xg.GamConfig(seed=0)
    params = xg.init_params(config, 4, 8, seed=0)
    assert params.phi_w.shape == (8, 4)
    assert params.phi_w_delta.shape == (8, 4)
    assert params.attn_w1.shape == (16, 2)
    assert params.attn_w2.shape == (1, 16)
    assert params.out_w.shape == (8, 8)
    assert params.n_channels_in == 4
    assert params.n_channels_out == 8


def test_init_params_deterministic():
    config = xg.GamConfig()
    p1 = xg.init_params(config, 3, 5, seed=11)
    p2 = xg.init_params(config, 3, 5, seed=11)
    p3 = xg.init_params(config, 3, 5, seed=12)
    for name, arr in p1.as_dict().items():
        assert np.array_equal(arr, p2.as_dict()[name])
    assert not np.array_equal(p1.phi_w, p3.phi_w)


def test_init_params_seed_defaults_to_config():
    config = xg.GamConfig(seed=4)
    assert np.array_equal(
        xg.init_params(config, 2, 3).attn_w1,
        xg.init_params(config, 2, 3, seed=4).attn_w1,
    )


def test_init_params_bounds_and_zero_biases():
    config = xg.GamConfig()
    params = xg.init_params(config, 4, 8, seed=0)
    for name in ("attn_b1", "attn_b2", "phi_b", "out_b"):
        assert np.all(getattr(params, name) == 0.0)
    assert np.all(np.abs(params.attn_w1) <= 1 / np.sqrt(2))
    assert np.all(np.abs(params.attn_w2) <= 1 / np.sqrt(16))
    assert np.all(np.abs(params.phi_w) <= 1 / np.sqrt(8))
    assert np.all(np.abs(params.out_w) <= 1 / np.sqrt(8))


def test_init_params_rejects_zero_channels():
    with pytest.raises(xg.InvalidInput):
        xg.init_params(xg.GamConfig(), 0, 4)


def test_params_check_config():
    config = xg.GamConfig()
    params = xg.init_params(config, 2, 2)
    params.check_config(config)
    with pytest.raises(xg.ShapeMismatch):
        params.check_config(config.replace(use_distance=False))


def test_params_shape_mismatch_and_non_finite():
    params = xg.init_params(xg.GamConfig(), 2, 3)
    with pytest.raises(xg.ShapeMismatch):
        params.replace(out_b=np.zeros(4))
    with pytest.raises(xg.NonFinite):
        params.replace(phi_b=np.full(3, np.nan))


def test_params_to_dict_round_trip():
    params = xg.init_params(xg.GamConfig(), 2, 3, seed=1)
    dct = json.loads(json.dumps(params.to_dict()))
    back = xg.GamParams.from_dict(dct)
    for name, arr in params.as_dict().items():
        assert np.array_equal(arr, back.as_dict()[name])
