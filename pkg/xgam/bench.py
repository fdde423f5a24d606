# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

"""
Timing of the scalar gradient against covariance normals, and of a layer
with gradient attention against the same layer without it.

The methods of a comparison run on the same neighborhoods; sampling,
neighbor search and the normal fitting supports are computed once, outside
the timed region.
"""

import csv
import logging
import platform
from dataclasses import dataclass, field
from time import perf_counter_ns
from typing import Dict, Tuple

import numpy as np

from . import autodiff as ad
from .context import context_name
from .core import InvalidInput, ShapeMismatch, validate_cloud
from .gam import GamLayer, LayerGeometry, param_vars
from .general import config_comment, dump_json
from .geometry import edge_geometry, pca_normals
from .sampling import ball_query, farthest_point_sample, support_neighborhoods

log = logging.getLogger(__name__)

METHOD_NORMAL = "normal"
METHOD_GRADIENT = "zenith_azimuth"
METHOD_PLAIN = "plain"
METHOD_GAM = "gam"

SCHEMA_VERSION = 1

MIN_REPS = 10
MIN_WARMUP = 3


def format_dt(dt_ms):
    """Human readable duration of ``dt_ms`` milliseconds."""
    dt = dt_ms * 1e-3
    if abs(dt) > 10e-3:
        return "%.1f ms" % (dt * 1e3)
    elif abs(dt) > 10e-6:
        return "%.1f us" % (dt * 1e6)
    else:
        return "%.0f ns" % (dt * 1e9)


@dataclass
class BenchReport:
    method: str
    reps: int
    times_ms: Tuple[float, ...]
    mean: float
    median: float
    stddev: float
    speedup: float
    environment: Dict[str, object] = field(default_factory=dict)

    def to_dict(self):
        return {
            "method": self.method,
            "reps": self.reps,
            "times_ms": list(self.times_ms),
            "mean_ms": self.mean,
            "median_ms": self.median,
            "stddev_ms": self.stddev,
            "speedup": self.speedup,
            "environment": dict(self.environment),
        }

    def summary(self):
        return (
            f"{self.method}: median {format_dt(self.median)}, "
            f"mean {format_dt(self.mean)} +- {format_dt(self.stddev)}, "
            f"{self.speedup:.1f}x"
        )


def make_bench_cloud(n_points=4096, seed=0, noise_sigma=0.0):
    """Points uniform on the unit sphere."""
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n_points, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    if noise_sigma > 0:
        pts += noise_sigma * rng.normal(size=pts.shape)
    return validate_cloud(pts)


def _time_ms(func, reps, warmup):
    for _ in range(warmup):
        func()
    times = []
    for _ in range(reps):
        t0 = perf_counter_ns()
        func()
        t1 = perf_counter_ns()
        # clock resolution can round a short run down to zero
        times.append(max(t1 - t0, 1) / 1e6)
    return tuple(times)


def _report(method, times, baseline_mean, environment):
    mean = float(np.mean(times))
    return BenchReport(
        method=method,
        reps=len(times),
        times_ms=times,
        mean=mean,
        median=float(np.median(times)),
        stddev=float(np.std(times, ddof=1)),
        speedup=baseline_mean / mean,
        environment=environment,
    )


def bench_gradient_methods(
    cloud, config, reps=50, warmup=MIN_WARMUP, k_support=None, context=None
):
    """Time covariance normals and the scalar gradient on shared inputs.

    Returns ``(normal_report, gradient_report)``; the speedup of each is the
    mean time of the normal method divided by its own mean time.
    """
    if reps < MIN_REPS:
        raise InvalidInput(f"reps must be >= {MIN_REPS}, got {reps}")
    if warmup < MIN_WARMUP:
        raise InvalidInput(f"warmup must be >= {MIN_WARMUP}, got {warmup}")
    if context is not None and context.openmp_enabled:
        raise InvalidInput("benchmarks run on a single thread context")
    k_support = config.k_neighbors if k_support is None else k_support

    centers = farthest_point_sample(
        cloud, config.n_centers, seed=config.seed, context=context
    )
    nbrs = ball_query(
        cloud, centers, config.radius, config.k_neighbors, context=context
    )
    support = support_neighborhoods(cloud, nbrs, k_support, context=context)

    def run_normal():
        pca_normals(cloud, nbrs, support=support, context=context)

    def run_gradient():
        edge_geometry(cloud, nbrs, eps=config.epsilon, context=context)

    environment = {
        "context": context_name(context),
        "threads": 1,
        "n_points": cloud.n_points,
        "n_centers": nbrs.n_centers,
        "k": nbrs.k,
        "k_support": k_support,
        "warmup": warmup,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "machine": platform.machine(),
    }
    log.info(f"benchmarking on {environment}")

    normal_times = _time_ms(run_normal, reps, warmup)
    gradient_times = _time_ms(run_gradient, reps, warmup)
    baseline_mean = float(np.mean(normal_times))
    normal = _report(METHOD_NORMAL, normal_times, baseline_mean, environment)
    gradient = _report(
        METHOD_GRADIENT, gradient_times, baseline_mean, environment
    )
    log.info(normal.summary())
    log.info(gradient.summary())
    return normal, gradient


def bench_gam_overhead(
    cloud, config, params, reps=50, warmup=MIN_WARMUP, context=None
):
    """Time one layer with and without gradient attention.

    The plain layer groups, extracts and max-pools; the attention layer
    also measures the edges and weighs them. Centers and neighborhoods are
    shared and computed once. Returns ``(plain_report, gam_report)``; the
    speedup of the attention layer is the plain mean over its own mean,
    so ``1 / speedup - 1`` is the relative overhead.
    """
    if reps < MIN_REPS:
        raise InvalidInput(f"reps must be >= {MIN_REPS}, got {reps}")
    if warmup < MIN_WARMUP:
        raise InvalidInput(f"warmup must be >= {MIN_WARMUP}, got {warmup}")
    if context is not None and context.openmp_enabled:
        raise InvalidInput("benchmarks run on a single thread context")
    if not config.attention_enabled:
        raise InvalidInput("the attention layer needs distance or gradient")
    features = cloud.coords if cloud.features is None else cloud.features
    params.check_config(config)
    if features.shape[1] != params.n_channels_in:
        raise ShapeMismatch(
            f"cloud has {features.shape[1]} channels, params expect "
            f"{params.n_channels_in}"
        )

    centers = farthest_point_sample(
        cloud, config.n_centers, seed=config.seed, context=context
    )
    nbrs = ball_query(
        cloud, centers, config.radius, config.k_neighbors, context=context
    )
    plain_layer = GamLayer(config, gam_enabled=False)
    gam_layer = GamLayer(config)

    def run_layer(layer, edges):
        tape = ad.Tape()
        layer.forward(
            tape,
            tape.constant(features),
            LayerGeometry(nbrs=nbrs, edges=edges),
            param_vars(tape, params),
        )

    def run_plain():
        # bypassed attention never reads the edges
        run_layer(plain_layer, None)

    def run_gam():
        edges = edge_geometry(
            cloud, nbrs, eps=config.epsilon, context=context
        )
        run_layer(gam_layer, edges)

    environment = {
        "context": context_name(context),
        "threads": 1,
        "n_points": cloud.n_points,
        "n_centers": nbrs.n_centers,
        "k": nbrs.k,
        "channels_in": params.n_channels_in,
        "channels_out": params.n_channels_out,
        "warmup": warmup,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "machine": platform.machine(),
    }
    log.info(f"benchmarking attention overhead on {environment}")

    plain_times = _time_ms(run_plain, reps, warmup)
    gam_times = _time_ms(run_gam, reps, warmup)
    baseline_mean = float(np.mean(plain_times))
    plain = _report(METHOD_PLAIN, plain_times, baseline_mean, environment)
    gam = _report(METHOD_GAM, gam_times, baseline_mean, environment)
    log.info(plain.summary())
    log.info(gam.summary())
    return plain, gam


def write_bench_rows(fid, reports):
    writer = csv.writer(fid, lineterminator="\n")
    writer.writerow(["method", "rep", "ms"])
    for report in reports:
        for rep, ms in enumerate(report.times_ms):
            writer.writerow([report.method, rep, repr(float(ms))])


def write_bench_csv(reports, path, config=None):
    with open(path, "w", newline="") as fid:
        if config is not None:
            fid.write(config_comment(config) + "\n")
        write_bench_rows(fid, reports)


def bench_document(reports, config=None):
    by_method = {report.method: report for report in reports}
    document = {
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "reports": [report.to_dict() for report in reports],
    }
    if METHOD_GRADIENT in by_method:
        document["speedup"] = by_method[METHOD_GRADIENT].speedup
    if METHOD_GAM in by_method:
        document["overhead"] = 1.0 / by_method[METHOD_GAM].speedup - 1.0
    return document


def write_bench_json(reports, path, config=None):
    dump_json(bench_document(reports, config), path)
