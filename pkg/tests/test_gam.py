# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

import math

import numpy as np
import pytest

import xgam as xg
from xgam.test_helpers import for_all_test_contexts

SQRT2 = math.sqrt(2.0)


def _single_edge(rel):
    rel = np.asarray(rel, dtype=float).reshape(1, 1, 3)
    dist = np.linalg.norm(rel, axis=-1)
    return xg.EdgeGeometry(rel=rel, dist=dist, grad=xg.scalar_gradient(rel))


def _toy_cloud(n_points=16, n_channels=3, seed=0):
    rng = np.random.default_rng(seed)
    return xg.validate_cloud(
        rng.uniform(-1, 1, size=(n_points, 3)),
        rng.normal(size=(n_points, n_channels)),
    )


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def test_zero_network_gives_one_half():
    config = xg.GamConfig()
    params = xg.init_params(config, 2, 2, seed=0)
    params = params.replace(
        attn_w1=np.zeros_like(params.attn_w1),
        attn_w2=np.zeros_like(params.attn_w2),
    )
    rng = np.random.default_rng(0)
    rel = rng.normal(size=(4, 5, 3))
    edges = xg.EdgeGeometry(
        rel=rel,
        dist=np.linalg.norm(rel, axis=-1),
        grad=xg.scalar_gradient(rel),
    )
    attn = xg.attention_weights(edges, params, config)
    assert attn.a.shape == (4, 5)
    assert np.all(attn.a == 0.5)


def test_attention_ignores_disabled_distance():
    config = xg.GamConfig(use_distance=False)
    params = xg.init_params(config, 2, 2, seed=1)
    edges = _single_edge([1, 1, SQRT2])
    other = xg.EdgeGeometry(
        rel=edges.rel, dist=edges.dist * 7.0, grad=edges.grad
    )
    a1 = xg.attention_weights(edges, params, config).a
    a2 = xg.attention_weights(other, params, config).a
    assert np.array_equal(a1, a2)


def test_attention_matches_scalar_mlp():
    config = xg.GamConfig()
    params = xg.init_params(config, 2, 2, seed=7)
    edges = _single_edge([1, 1, SQRT2])
    xg.assert_allclose(edges.grad, 1.0, rtol=0, atol=1e-12)
    xg.assert_allclose(edges.dist, 2.0, rtol=0, atol=1e-12)

    g, d = float(edges.grad[0, 0]), float(edges.dist[0, 0])
    w1, b1 = params.attn_w1, params.attn_b1
    w2, b2 = params.attn_w2, params.attn_b2
    logit = b2[0]
    for ii in range(config.mlp_hidden):
        hidden = max(0.0, w1[ii, 0] * g + w1[ii, 1] * d + b1[ii])
        logit += w2[0, ii] * hidden
    attn = xg.attention_weights(edges, params, config)
    assert attn.a[0, 0] == pytest.approx(_sigmoid(logit), rel=1e-12)


def test_attention_normalized_distance():
    config = xg.GamConfig(radius=0.5, normalize_distance=True)
    params = xg.init_params(config, 2, 2, seed=3)
    edges = _single_edge([0.1, 0.2, 0.3])
    shrunk = xg.EdgeGeometry(
        rel=edges.rel, dist=edges.dist / 0.5, grad=edges.grad
    )
    a1 = xg.attention_weights(edges, params, config).a
    a2 = xg.attention_weights(
        shrunk, params, config.replace(normalize_distance=False)
    ).a
    xg.assert_allclose(a1, a2, rtol=1e-14, atol=0)


def test_attention_disabled_is_an_error():
    config = xg.GamConfig(use_distance=False, use_gradient=False)
    params = xg.init_params(config, 2, 2)
    with pytest.raises(xg.InvalidInput):
        xg.attention_weights(_single_edge([1, 0, 0]), params, config)


def test_attention_matrix_bounds():
    xg.AttentionMatrix(a=np.full((2, 2), 0.5))
    for bad in (0.0, 1.0, np.nan):
        with pytest.raises(xg.GamError):
            xg.AttentionMatrix(a=np.full((2, 2), bad))


def test_default_phi_selector():
    config = xg.GamConfig()
    params = xg.init_params(config, 2, 2, seed=0).replace(
        phi_w=np.eye(2), phi_w_delta=np.zeros((2, 2))
    )
    rng = np.random.default_rng(2)
    f = rng.normal(size=(3, 4, 2))
    out = xg.default_phi(xg.NeighborFeatures(f=f), f[:, 0], params)
    assert np.array_equal(out, np.maximum(f, 0.0))


def test_default_phi_zero_difference():
    config = xg.GamConfig()
    params = xg.init_params(config, 2, 3, seed=4)
    center = np.array([[0.3, -0.2]])
    f = np.broadcast_to(center[:, None, :], (1, 5, 2))
    out = xg.default_phi(f, center, params)
    expected = np.maximum(center @ params.phi_w.T + params.phi_b, 0.0)
    xg.assert_allclose(out, np.broadcast_to(expected, (1, 5, 3)), 0, 1e-14)


def test_default_phi_hand_multiply():
    config = xg.GamConfig()
    rng = np.random.default_rng(5)
    params = xg.init_params(config, 2, 2, seed=0).replace(
        phi_w=rng.normal(size=(2, 2)),
        phi_w_delta=rng.normal(size=(2, 2)),
        phi_b=rng.normal(size=2),
    )
    f = rng.normal(size=(1, 2, 2))
    center = rng.normal(size=(1, 2))
    out = xg.default_phi(f, center, params)
    w = np.hstack([params.phi_w, params.phi_w_delta])
    for jj in range(2):
        x = [f[0, jj, 0], f[0, jj, 1]]
        x += [f[0, jj, 0] - center[0, 0], f[0, jj, 1] - center[0, 1]]
        for oo in range(2):
            acc = params.phi_b[oo] + sum(w[oo, ii] * x[ii] for ii in range(4))
            assert out[0, jj, oo] == pytest.approx(max(acc, 0.0), abs=1e-14)


def test_default_phi_shape_checks():
    params = xg.init_params(xg.GamConfig(), 2, 2)
    with pytest.raises(xg.ShapeMismatch):
        xg.default_phi(np.zeros((1, 2, 3)), np.zeros((1, 3)), params)
    with pytest.raises(xg.ShapeMismatch):
        xg.default_phi(np.zeros((1, 2, 2)), np.zeros((2, 2)), params)


def _aggregate_setup(seed=0):
    rng = np.random.default_rng(seed)
    params = xg.init_params(xg.GamConfig(), 3, 4, seed=seed)
    phi_out = np.maximum(rng.normal(size=(5, 6, 4)), 0.0)
    attn = xg.AttentionMatrix(a=rng.uniform(0.05, 0.95, size=(5, 6)))
    return params, phi_out, attn


def _out_mlp(phi_out, params):
    return np.maximum(phi_out @ params.out_w.T + params.out_b, 0.0)


def test_aggregate_lambda_zero():
    params, phi_out, attn = _aggregate_setup()
    out = xg.aggregate(phi_out, attn, params, lambda_=0.0)
    assert np.array_equal(out.f_out, _out_mlp(phi_out, params))
    assert np.array_equal(out.pooled, out.f_out.max(axis=1))


@pytest.mark.parametrize("lambda_", [0.0, 0.3, 1.0, 25.0])
def test_aggregate_unit_attention(lambda_):
    params, phi_out, _ = _aggregate_setup(1)
    ones = xg.aggregate(phi_out, np.ones((5, 6)), params, lambda_)
    bypass = xg.aggregate(phi_out, None, params, lambda_)
    assert np.array_equal(ones.f_out, bypass.f_out)
    assert np.array_equal(bypass.f_out, _out_mlp(phi_out, params))


def test_aggregate_three_quarters():
    params, phi_out, _ = _aggregate_setup(2)
    params = params.replace(out_w=np.eye(4), out_b=np.zeros(4))
    attn = xg.AttentionMatrix(a=np.full((5, 6), 0.5))
    out = xg.aggregate(phi_out, attn, params, lambda_=1.0)
    xg.assert_allclose(out.f_out, 0.75 * phi_out, rtol=1e-15, atol=0)


def test_aggregate_monotone_in_attention():
    params, phi_out, attn = _aggregate_setup(3)
    params = params.replace(out_w=np.eye(4), out_b=np.zeros(4))
    phi_out = phi_out + 0.1
    raised = attn.a.copy()
    raised[2, 3] = 0.99
    base = xg.aggregate(phi_out, attn, params, lambda_=0.7)
    more = xg.aggregate(phi_out, raised, params, lambda_=0.7)
    assert np.all(more.f_out >= base.f_out)
    assert np.all(more.f_out[2, 3] > base.f_out[2, 3])


def test_aggregate_errors():
    params, phi_out, attn = _aggregate_setup()
    with pytest.raises(xg.InvalidInput):
        xg.aggregate(phi_out, attn, params, lambda_=-0.5)
    with pytest.raises(xg.ShapeMismatch):
        xg.aggregate(phi_out, np.full((5, 5), 0.5), params, 1.0)
    with pytest.raises(xg.ShapeMismatch):
        xg.aggregate(phi_out[..., :3], attn, params, 1.0)


def test_gam_forward_bypass_is_plain_pipeline():
    cloud = _toy_cloud()
    config = xg.GamConfig(
        n_centers=4,
        k_neighbors=5,
        radius=0.8,
        use_distance=False,
        use_gradient=False,
    )
    params = xg.init_params(config, 3, 6, seed=2)
    out = xg.gam_forward(cloud, config, params)

    nbrs = out.nbrs
    phi = xg.default_phi(
        xg.NeighborFeatures.gather(cloud.features, nbrs),
        cloud.features[nbrs.center_ids],
        params,
    )
    plain = xg.aggregate(phi, None, params, config.lambda_)
    assert np.array_equal(out.f_out, plain.f_out)
    assert np.array_equal(out.pooled, plain.pooled)


def test_gam_disabled_equals_unit_attention():
    cloud = _toy_cloud(seed=1)
    config = xg.GamConfig(n_centers=4, k_neighbors=5, radius=0.8)
    params = xg.init_params(config, 3, 6, seed=2)
    off = xg.gam_forward(cloud, config, params, gam_enabled=False)
    phi = xg.default_phi(
        xg.NeighborFeatures.gather(cloud.features, off.nbrs),
        cloud.features[off.nbrs.center_ids],
        params,
    )
    ones = xg.aggregate(phi, np.ones(phi.shape[:2]), params, config.lambda_)
    assert np.array_equal(off.f_out, ones.f_out)


def test_gam_forward_deterministic():
    cloud = _toy_cloud()
    config = xg.GamConfig(n_centers=4, k_neighbors=4, radius=0.7, seed=3)
    params = xg.init_params(config, 3, 5)
    o1 = xg.gam_forward(cloud, config, params)
    o2 = xg.gam_forward(cloud, config, params)
    assert np.array_equal(o1.f_out, o2.f_out)
    assert np.array_equal(o1.pooled, o2.pooled)
    assert o1.pooled.shape == (4, 5)
    assert o1.f_out.shape == (4, 4, 5)
    assert o1.n_channels == 5


def test_gam_forward_translation_invariance():
    cloud = _toy_cloud(n_points=32, seed=4)
    moved = xg.validate_cloud(cloud.coords + [10.0, -3.0, 2.5], cloud.features)
    config = xg.GamConfig(n_centers=6, k_neighbors=6, radius=0.9)
    params = xg.init_params(config, 3, 4, seed=1)
    o1 = xg.gam_forward(cloud, config, params)
    o2 = xg.gam_forward(moved, config, params)
    assert np.array_equal(o1.nbrs.neighbor_ids, o2.nbrs.neighbor_ids)
    xg.assert_allclose(o1.f_out, o2.f_out, rtol=1e-9, atol=1e-9)


def test_gam_forward_scale_invariant_without_distance():
    cloud = _toy_cloud(n_points=32, seed=5)
    scaled = xg.validate_cloud(2.0 * cloud.coords, cloud.features)
    config = xg.GamConfig(
        n_centers=6, k_neighbors=6, radius=0.9, use_distance=False
    )
    params = xg.init_params(config, 3, 4, seed=1)
    o1 = xg.gam_forward(cloud, config, params)
    o2 = xg.gam_forward(scaled, config.replace(radius=1.8), params)
    assert np.array_equal(o1.nbrs.neighbor_ids, o2.nbrs.neighbor_ids)
    xg.assert_allclose(o1.f_out, o2.f_out, rtol=1e-12, atol=1e-12)


def test_gam_forward_custom_phi():
    cloud = _toy_cloud()
    config = xg.GamConfig(n_centers=3, k_neighbors=4, radius=0.8)
    params = xg.init_params(config, 3, 2, seed=0).replace(
        out_w=np.eye(2), out_b=np.zeros(2)
    )
    seen = {}

    def phi(features, center_features, prm):
        seen["features"] = features
        seen["center"] = center_features
        return np.ones(features.f.shape[:2] + (2,))

    out = xg.gam_forward(cloud, config, params, phi=phi)
    assert isinstance(seen["features"], xg.NeighborFeatures)
    assert seen["features"].f.shape == (3, 4, 3)
    assert seen["center"].shape == (3, 3)
    a = xg.attention_weights(
        xg.edge_geometry(cloud, out.nbrs), params, config
    ).a
    xg.assert_allclose(out.f_out[..., 0], (a + 1.0) / 2.0, 1e-14, 0)


def test_gam_forward_input_checks():
    config = xg.GamConfig(n_centers=2, k_neighbors=2)
    params = xg.init_params(config, 3, 2)
    with pytest.raises(xg.InvalidInput):
        xg.gam_forward(xg.validate_cloud(np.eye(3)), config, params)
    with pytest.raises(xg.ShapeMismatch):
        xg.gam_forward(_toy_cloud(n_channels=2), config, params)
    with pytest.raises(xg.TooManyCenters):
        xg.gam_forward(
            _toy_cloud(n_points=4), config.replace(n_centers=5), params
        )


def _scripted_layer(coords, features, config, params):
    """Center sampling to pooled output with plain loops."""
    n_points = len(coords)

    def d2(i, j):
        dx = coords[i][0] - coords[j][0]
        dy = coords[i][1] - coords[j][1]
        dz = coords[i][2] - coords[j][2]
        return dx * dx + dy * dy + dz * dz

    centers = [config.seed % n_points]
    while len(centers) < config.n_centers:
        scores = [
            -1.0 if ii in centers else min(d2(ii, cc) for cc in centers)
            for ii in range(n_points)
        ]
        centers.append(scores.index(max(scores)))

    r2 = config.radius * config.radius
    pooled = []
    for cc in centers:
        hits = [ii for ii in range(n_points) if d2(ii, cc) <= r2]
        hits = hits[: config.k_neighbors]
        hits += [hits[0]] * (config.k_neighbors - len(hits))
        rows = []
        for jj in hits:
            x, y, z = (coords[jj][aa] - coords[cc][aa] for aa in range(3))
            rho = math.sqrt(x * x + y * y)
            d = math.sqrt(x * x + y * y + z * z)
            g = (z / d) * ((x + y) / rho) if rho > 1e-8 and d > 1e-8 else 0.0
            hidden = [
                max(
                    0.0,
                    params.attn_w1[hh, 0] * g
                    + params.attn_w1[hh, 1] * d
                    + params.attn_b1[hh],
                )
                for hh in range(config.mlp_hidden)
            ]
            logit = params.attn_b2[0] + sum(
                params.attn_w2[0, hh] * hidden[hh]
                for hh in range(config.mlp_hidden)
            )
            a = _sigmoid(logit)
            inp = list(features[jj]) + [
                features[jj][ch] - features[cc][ch]
                for ch in range(len(features[jj]))
            ]
            n_in = len(features[jj])
            phi = []
            for oo in range(params.phi_b.shape[0]):
                acc = params.phi_b[oo]
                for ii in range(n_in):
                    acc += params.phi_w[oo, ii] * inp[ii]
                    acc += params.phi_w_delta[oo, ii] * inp[n_in + ii]
                phi.append(max(acc, 0.0))
            lam = config.lambda_
            mixed = [(lam * a * p + p) / (1.0 + lam) for p in phi]
            out = []
            for oo in range(params.out_b.shape[0]):
                acc = params.out_b[oo]
                for ii in range(len(mixed)):
                    acc += params.out_w[oo, ii] * mixed[ii]
                out.append(max(acc, 0.0))
            rows.append(out)
        pooled.append([max(col) for col in zip(*rows)])
    return centers, pooled


def test_gam_forward_matches_scripted_oracle():
    coords = [
        [0.0, 0.0, 0.0],
        [0.4, 0.1, 0.2],
        [0.1, 0.5, -0.1],
        [1.0, 1.0, 0.3],
        [1.2, 0.8, 0.6],
        [0.9, 1.3, 0.1],
        [0.3, 0.2, 0.9],
        [1.1, 1.1, -0.4],
    ]
    features = [[0.1 * ii, 1.0 - 0.2 * ii] for ii in range(8)]
    config = xg.GamConfig(
        n_centers=2, k_neighbors=3, radius=0.7, mlp_hidden=2, lambda_=0.5
    )
    params = xg.GamParams(
        attn_w1=np.array([[0.5, -0.3], [-0.8, 0.9]]),
        attn_b1=np.array([0.1, -0.05]),
        attn_w2=np.array([[1.2, -0.7]]),
        attn_b2=np.array([0.2]),
        phi_w=np.array([[0.6, -0.4], [0.3, 0.8]]),
        phi_w_delta=np.array([[-0.5, 0.2], [0.7, -0.1]]),
        phi_b=np.array([0.05, 0.1]),
        out_w=np.array([[0.9, 0.1], [-0.3, 1.1]]),
        out_b=np.array([0.01, -0.02]),
    )
    cloud = xg.validate_cloud(np.array(coords), np.array(features))
    out = xg.gam_forward(cloud, config, params)

    centers, pooled = _scripted_layer(coords, features, config, params)
    assert out.nbrs.center_ids.tolist() == centers
    xg.assert_allclose(out.pooled, pooled, rtol=1e-12, atol=1e-14)


def test_gam_layers():
    cloud = _toy_cloud(n_points=64, seed=6)
    configs = [
        xg.GamConfig(n_centers=16, k_neighbors=8, radius=0.8),
        xg.GamConfig(n_centers=4, k_neighbors=4, radius=1.5),
    ]
    params_list = [
        xg.init_params(configs[0], 3, 8, seed=0),
        xg.init_params(configs[1], 8, 5, seed=1),
    ]
    outs = xg.gam_layers(cloud, configs, params_list)
    assert [oo.pooled.shape for oo in outs] == [(16, 8), (4, 5)]

    first_centers = outs[0].nbrs.center_ids
    level = xg.validate_cloud(cloud.coords[first_centers], outs[0].pooled)
    again = xg.gam_forward(level, configs[1], params_list[1])
    assert np.array_equal(again.pooled, outs[1].pooled)

    with pytest.raises(xg.InvalidInput):
        xg.gam_layers(cloud, configs, params_list[:1])


@for_all_test_contexts(excluding=("numpy",))
def test_gam_forward_compiled_matches_numpy(test_context):
    cloud = _toy_cloud(n_points=128, seed=7)
    config = xg.GamConfig(n_centers=16, k_neighbors=8, radius=0.6)
    params = xg.init_params(config, 3, 8, seed=0)
    ref = xg.gam_forward(cloud, config, params)
    out = xg.gam_forward(cloud, config, params, context=test_context)
    assert np.array_equal(ref.nbrs.neighbor_ids, out.nbrs.neighbor_ids)
    xg.assert_allclose(out.f_out, ref.f_out, rtol=1e-12, atol=1e-12)
