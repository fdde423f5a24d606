# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

"""
Synthetic shape classification with one gradient attention layer.

The classifier is ``GamLayer -> max over centers -> affine -> softmax`` and
is trained by plain gradient descent with the ``autodiff`` tape.
"""

import logging
from dataclasses import dataclass, field
from time import perf_counter
from typing import Dict, List, Optional

import numpy as np

from . import autodiff as ad
from .core import (
    DivergedLoss,
    GamConfig,
    InvalidInput,
    init_params,
    validate_cloud,
)
from .gam import GamLayer, prepare_geometry
from .general import config_comment, dump_json

log = logging.getLogger(__name__)

CLASS_NAMES = ("sphere", "cube", "plane")

SCHEMA_VERSION = 1

CURVES_HEADER = "epoch,loss,train_accuracy,test_accuracy,wall_time_s"


def default_demo_config(**kwargs):
    """Settings of the reference demo run."""
    settings = dict(radius=0.35, n_centers=32, k_neighbors=16, seed=0)
    settings.update(kwargs)
    return GamConfig(**settings)


@dataclass(frozen=True, eq=False)
class ShapeSample:
    """A labeled cloud; ``normal`` is the generating plane normal of planes."""

    cloud: object
    label: int
    normal: Optional[np.ndarray] = None

    @property
    def name(self):
        return CLASS_NAMES[self.label]


def _unit_vectors(rng, n):
    vv = rng.normal(size=(n, 3))
    return vv / np.linalg.norm(vv, axis=1, keepdims=True)


def _sample_sphere(rng, n_points):
    return _unit_vectors(rng, n_points), None


def _sample_cube(rng, n_points):
    # equal face areas: a uniform face choice is uniform on the surface
    face = rng.integers(0, 6, size=n_points)
    pts = rng.uniform(-0.5, 0.5, size=(n_points, 3))
    axis = face // 2
    pts[np.arange(n_points), axis] = np.where(face % 2 == 0, -0.5, 0.5)
    return pts, None


def _sample_plane(rng, n_points):
    normal = _unit_vectors(rng, 1)[0]
    helper = np.eye(3)[np.argmin(np.abs(normal))]
    u = np.cross(normal, helper)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    radius = np.sqrt(rng.uniform(0.0, 1.0, size=n_points))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n_points)
    pts = (radius * np.cos(theta))[:, None] * u
    pts = pts + (radius * np.sin(theta))[:, None] * v
    return pts, normal


_SAMPLERS = (_sample_sphere, _sample_cube, _sample_plane)


def generate_shapes(n_per_class, noise_sigma=0.0, seed=0, n_points=256):
    """Labeled spheres, cube surfaces and discs, ``n_per_class`` of each.

    Spheres have radius 1, cubes side 1, discs radius 1 with a random
    orientation; every point gets Gaussian noise of std ``noise_sigma``.
    """
    if n_per_class < 1:
        raise InvalidInput(f"n_per_class must be >= 1, got {n_per_class}")
    if not noise_sigma >= 0:
        raise InvalidInput(f"noise_sigma must be >= 0, got {noise_sigma}")
    if n_points < 1:
        raise InvalidInput(f"n_points must be >= 1, got {n_points}")

    rng = np.random.default_rng(seed)
    samples = []
    for label, sampler in enumerate(_SAMPLERS):
        for _ in range(n_per_class):
            pts, normal = sampler(rng, n_points)
            pts = pts + noise_sigma * rng.normal(size=pts.shape)
            samples.append(
                ShapeSample(
                    cloud=validate_cloud(pts), label=label, normal=normal
                )
            )
    return samples


def split_dataset(samples, test_fraction=0.2, seed=0):
    """Seeded shuffle, then the last ``test_fraction`` goes to the test set."""
    if not 0 < test_fraction < 1:
        raise InvalidInput("test_fraction must be in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(samples))
    n_test = int(round(test_fraction * len(samples)))
    n_train = len(samples) - n_test
    train = [samples[ii] for ii in order[:n_train]]
    test = [samples[ii] for ii in order[n_train:]]
    return train, test


class ShapeClassifier:
    """GAM layer on ``coords / radius`` features, global max pool, linear
    head. The head starts at zero unless ``head_scale`` is given."""

    def __init__(
        self,
        config,
        n_channels_out=32,
        n_classes=len(CLASS_NAMES),
        gam_enabled=True,
        seed=None,
        head_scale=0.0,
    ):
        self.config = config
        self.layer = GamLayer(config, gam_enabled=gam_enabled)
        seed = config.seed if seed is None else seed
        gam_params = init_params(config, 3, n_channels_out, seed=seed)
        rng = np.random.default_rng(seed + 1)
        self.params = {
            "gam." + name: arr.copy()
            for name, arr in gam_params.as_dict().items()
        }
        self.params["head_w"] = head_scale * rng.uniform(
            -1.0, 1.0, size=(n_classes, n_channels_out)
        )
        self.params["head_b"] = np.zeros(n_classes)

    def parameters(self) -> Dict[str, np.ndarray]:
        return dict(self.params)

    def set_parameters(self, params):
        missing = set(self.params) - set(params)
        if missing:
            raise KeyError(f"missing parameters {sorted(missing)}")
        self.params = {name: np.asarray(params[name]) for name in self.params}

    def prepare(self, sample, context=None):
        """Geometry and input features of a sample (no gradients flow into
        either)."""
        cloud = sample.cloud
        geometry = prepare_geometry(cloud, self.config, context=context)
        return geometry, cloud.coords / self.config.radius

    def logits(self, tape, pv, prepared):
        gam_pv = {
            name[len("gam.") :]: var
            for name, var in pv.items()
            if name.startswith("gam.")
        }
        rows = []
        for geometry, features in prepared:
            _, pooled = self.layer.forward(
                tape, tape.constant(features), geometry, gam_pv
            )
            rows.append(ad.expand_dims(ad.max(pooled, axis=0), 0))
        return ad.affine(ad.concat(rows, axis=0), pv["head_w"], pv["head_b"])

    def loss(self, tape, pv, prepared, labels):
        logits = self.logits(tape, pv, prepared)
        return ad.softmax_cross_entropy(logits, labels)

    def _constants(self, tape):
        return {name: tape.constant(arr) for name, arr in self.params.items()}

    def evaluate(self, prepared, labels):
        """Mean loss and accuracy on prepared samples."""
        if not prepared:
            return float("nan"), float("nan")
        tape = ad.Tape()
        logits = self.logits(tape, self._constants(tape), prepared)
        loss = ad.softmax_cross_entropy(logits, labels)
        accuracy = np.mean(np.argmax(logits.value, axis=1) == labels)
        return float(loss.value), float(accuracy)

    def predict(self, prepared):
        tape = ad.Tape()
        logits = self.logits(tape, self._constants(tape), prepared)
        return np.argmax(logits.value, axis=1)


@dataclass
class TrainReport:
    config: dict
    gam_enabled: bool
    lr: float
    batch_size: Optional[int]
    n_train: int
    n_test: int
    loss: List[float] = field(default_factory=list)
    train_accuracy: List[float] = field(default_factory=list)
    test_accuracy: List[float] = field(default_factory=list)
    wall_time_s: List[float] = field(default_factory=list)
    final_train_accuracy: float = float("nan")
    final_test_accuracy: float = float("nan")

    @property
    def epochs(self):
        return len(self.loss)

    def to_dict(self, include_timing=True):
        out = {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "gam_enabled": self.gam_enabled,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "loss": list(self.loss),
            "train_accuracy": list(self.train_accuracy),
            "test_accuracy": list(self.test_accuracy),
            "final_train_accuracy": self.final_train_accuracy,
            "final_test_accuracy": self.final_test_accuracy,
        }
        if include_timing:
            out["wall_time_s"] = list(self.wall_time_s)
        return out


def _check_finite_loss(value, where):
    if not np.isfinite(value):
        raise DivergedLoss(f"non-finite loss {value} {where}")


def train_classifier(
    dataset,
    config,
    epochs=30,
    lr=0.01,
    gam_enabled=True,
    batch_size=None,
    n_channels_out=32,
    test_fraction=0.2,
    context=None,
):
    """Train a ``ShapeClassifier`` by gradient descent with a fixed rate.

    ``batch_size=None`` takes full-batch steps; otherwise every epoch walks
    a seeded permutation of the training set in batches of that size.

    Raises:
        DivergedLoss: a training or evaluation loss is not finite.
    """
    if epochs < 0:
        raise InvalidInput(f"epochs must be >= 0, got {epochs}")
    if not lr > 0:
        raise InvalidInput(f"lr must be > 0, got {lr}")
    if batch_size is not None and batch_size < 1:
        raise InvalidInput(f"batch_size must be >= 1, got {batch_size}")

    train, test = split_dataset(dataset, test_fraction, seed=config.seed)
    model = ShapeClassifier(
        config, n_channels_out=n_channels_out, gam_enabled=gam_enabled
    )
    prep_train = [model.prepare(ss, context=context) for ss in train]
    prep_test = [model.prepare(ss, context=context) for ss in test]
    y_train = np.array([ss.label for ss in train], dtype=np.int64)
    y_test = np.array([ss.label for ss in test], dtype=np.int64)

    report = TrainReport(
        config=config.to_dict(),
        gam_enabled=gam_enabled,
        lr=lr,
        batch_size=batch_size,
        n_train=len(train),
        n_test=len(test),
    )
    rng = np.random.default_rng(config.seed)
    step = batch_size or len(train)
    for epoch in range(epochs):
        t0 = perf_counter()
        if batch_size is None:
            order = np.arange(len(train))
        else:
            order = rng.permutation(len(train))
        for start in range(0, len(train), step):
            idx = order[start : start + step]
            tape = ad.Tape()
            pv = {
                name: tape.parameter(name, arr)
                for name, arr in model.params.items()
            }
            batch = [prep_train[ii] for ii in idx]
            loss = model.loss(tape, pv, batch, y_train[idx])
            _check_finite_loss(float(loss.value), f"at epoch {epoch}")
            grads = ad.backward(tape, loss)
            model.set_parameters(
                {
                    name: arr - lr * grads[name]
                    for name, arr in model.params.items()
                }
            )

        train_loss, train_acc = model.evaluate(prep_train, y_train)
        _check_finite_loss(train_loss, f"after epoch {epoch}")
        _, test_acc = model.evaluate(prep_test, y_test)
        report.loss.append(train_loss)
        report.train_accuracy.append(train_acc)
        report.test_accuracy.append(test_acc)
        report.wall_time_s.append(perf_counter() - t0)
        log.info(
            f"epoch {epoch}: loss {train_loss:.4f} train {train_acc:.3f} "
            f"test {test_acc:.3f}"
        )

    _, report.final_train_accuracy = model.evaluate(prep_train, y_train)
    _, report.final_test_accuracy = model.evaluate(prep_test, y_test)
    return report


ABLATION_VARIANTS = {
    "none": dict(use_distance=False, use_gradient=False),
    "distance": dict(use_distance=True, use_gradient=False),
    "gradient": dict(use_distance=False, use_gradient=True),
    "both": dict(use_distance=True, use_gradient=True),
}


def run_ablation(dataset, config, **train_kwargs):
    """Train one classifier per attention input variant."""
    reports = {}
    for name, flags in ABLATION_VARIANTS.items():
        log.info(f"ablation variant `{name}`")
        reports[name] = train_classifier(
            dataset, config.replace(**flags), **train_kwargs
        )
    return reports


def gradcheck_classifier(seed=0, h=1e-5):
    """Finite difference check of the classifier loss on a 6-point cloud."""
    rng = np.random.default_rng(seed)
    config = GamConfig(
        n_centers=2, k_neighbors=3, radius=2.0, mlp_hidden=4, seed=seed
    )
    sample = ShapeSample(
        cloud=validate_cloud(rng.uniform(-0.5, 0.5, size=(6, 3))), label=1
    )
    model = ShapeClassifier(config, n_channels_out=4, head_scale=0.5)
    prepared = [model.prepare(sample)]
    labels = np.array([sample.label])

    # self edges feed zeros to the attention MLP: zero biases would sit
    # every one of them on the relu kink
    params = model.parameters()
    for name, arr in params.items():
        if name.endswith(("_b", "_b1", "_b2")):
            params[name] = arr + rng.uniform(0.05, 0.2, size=arr.shape)

    def loss(tape, pvars):
        return model.loss(tape, pvars, prepared, labels)

    return ad.finite_difference_check(loss, params, h=h)


def write_report_json(report, path):
    dump_json(report.to_dict(), path)


def write_curves_csv(report, path):
    with open(path, "w") as fid:
        fid.write(config_comment(report.config) + "\n")
        fid.write(CURVES_HEADER + "\n")
        for ii in range(report.epochs):
            values = (
                report.loss[ii],
                report.train_accuracy[ii],
                report.test_accuracy[ii],
                report.wall_time_s[ii],
            )
            fid.write(
                ",".join([str(ii)] + [repr(float(vv)) for vv in values])
                + "\n"
            )
