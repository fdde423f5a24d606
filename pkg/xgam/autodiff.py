# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

"""
Reverse-mode differentiation restricted to the operations of a GAM layer.

Operations append records to a ``Tape`` in execution order; each record
stores its value, the indices of its inputs and a vector-Jacobian product.
``backward`` sweeps the records once in reverse order.

Example:

.. code-block:: python

    tape = xg.Tape()
    w = tape.parameter("w", np.ones((2, 3)))
    x = tape.constant(np.arange(3.0))
    loss = xg.ad.sum(xg.ad.affine(x, w))
    grads = xg.backward(tape, loss)
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.special import expit

from .core import NonScalarLoss, ShapeMismatch

log = logging.getLogger(__name__)

# sigmoid outputs are kept strictly inside (0, 1)
_SIGMOID_LOW = np.finfo(np.float64).tiny
_SIGMOID_HIGH = np.nextafter(1.0, 0.0)


@dataclass
class Record:
    op: str
    value: np.ndarray
    inputs: Tuple[int, ...] = ()
    vjp: Optional[Callable] = None
    name: Optional[str] = None
    n_visits: int = 0


class Var:
    """Handle on a record of a tape."""

    __slots__ = ("tape", "index")

    def __init__(self, tape, index):
        self.tape = tape
        self.index = index

    @property
    def value(self):
        return self.tape.records[self.index].value

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        rec = self.tape.records[self.index]
        return f"Var({rec.op}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)


class Tape:
    def __init__(self):
        self.records = []
        self.parameters: Dict[str, int] = {}

    def __len__(self):
        return len(self.records)

    def _push(self, op, value, inputs=(), vjp=None, name=None):
        value = np.asarray(value, dtype=np.float64)
        self.records.append(
            Record(op=op, value=value, inputs=inputs, vjp=vjp, name=name)
        )
        return Var(self, len(self.records) - 1)

    def parameter(self, name, value):
        """Leaf whose gradient is returned by ``backward``."""
        if name in self.parameters:
            raise ValueError(f"Parameter `{name}` is already on the tape")
        var = self._push("parameter", np.array(value, dtype=np.float64),
                         name=name)
        self.parameters[name] = var.index
        return var

    def constant(self, value):
        return self._push("constant", value)

    def as_var(self, value):
        if isinstance(value, Var):
            if value.tape is not self:
                raise ValueError("Var belongs to another tape")
            return value
        return self.constant(value)


def _tape_of(*args):
    for aa in args:
        if isinstance(aa, Var):
            return aa.tape
    raise ValueError("At least one operand must be a Var")


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def affine(x, w, b=None):
    """``x @ w.T + b`` over the last axis of ``x``; ``w`` is out x in."""
    tape = _tape_of(x, w, b)
    x, w = tape.as_var(x), tape.as_var(w)
    if w.value.ndim != 2 or x.value.shape[-1] != w.value.shape[1]:
        raise ShapeMismatch(
            f"cannot apply a {w.shape} weight to inputs of shape {x.shape}"
        )
    xv, wv = x.value, w.value
    out = xv @ wv.T
    inputs = (x.index, w.index)
    if b is not None:
        b = tape.as_var(b)
        if b.value.shape != (wv.shape[0],):
            raise ShapeMismatch(f"bias must have shape ({wv.shape[0]},)")
        out = out + b.value
        inputs = inputs + (b.index,)

    def vjp(g):
        gx = g @ wv
        # leading axes of x are batch axes, summed into the weight gradient
        gw = g.reshape(-1, g.shape[-1]).T @ xv.reshape(-1, xv.shape[-1])
        if b is None:
            return gx, gw
        return gx, gw, g.reshape(-1, wv.shape[0]).sum(axis=0)

    return tape._push("affine", out, inputs, vjp)


def relu(x):
    xv = x.value
    # subgradient 0 at 0
    return x.tape._push(
        "relu", np.maximum(xv, 0.0), (x.index,), lambda g: (g * (xv > 0),)
    )


def sigmoid(x):
    sv = np.clip(expit(x.value), _SIGMOID_LOW, _SIGMOID_HIGH)
    return x.tape._push(
        "sigmoid", sv, (x.index,), lambda g: (g * (sv * (1.0 - sv)),)
    )


def add(a, b):
    tape = _tape_of(a, b)
    a, b = tape.as_var(a), tape.as_var(b)
    sa, sb = a.shape, b.shape
    return tape._push(
        "add",
        a.value + b.value,
        (a.index, b.index),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def sub(a, b):
    tape = _tape_of(a, b)
    a, b = tape.as_var(a), tape.as_var(b)
    sa, sb = a.shape, b.shape
    return tape._push(
        "sub",
        a.value - b.value,
        (a.index, b.index),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
    )


def mul(a, b):
    tape = _tape_of(a, b)
    a, b = tape.as_var(a), tape.as_var(b)
    av, bv = a.value, b.value
    return tape._push(
        "mul",
        av * bv,
        (a.index, b.index),
        lambda g: (
            _unbroadcast(g * bv, av.shape),
            _unbroadcast(g * av, bv.shape),
        ),
    )


def scale(x, c):
    c = float(c)
    return x.tape._push("scale", x.value * c, (x.index,), lambda g: (g * c,))


def div_scalar(x, c):
    c = float(c)
    return x.tape._push(
        "div_scalar", x.value / c, (x.index,), lambda g: (g / c,)
    )


def add_scalar(x, c):
    return x.tape._push(
        "add_scalar", x.value + float(c), (x.index,), lambda g: (g,)
    )


def concat(xs, axis=-1):
    tape = _tape_of(*xs)
    xs = [tape.as_var(xx) for xx in xs]
    sizes = [xx.value.shape[axis] for xx in xs]
    splits = np.cumsum(sizes)[:-1]
    return tape._push(
        "concat",
        np.concatenate([xx.value for xx in xs], axis=axis),
        tuple(xx.index for xx in xs),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def expand_dims(x, axis):
    return x.tape._push(
        "expand_dims",
        np.expand_dims(x.value, axis),
        (x.index,),
        lambda g: (np.squeeze(g, axis=axis),),
    )


def squeeze(x, axis):
    return x.tape._push(
        "squeeze",
        np.squeeze(x.value, axis=axis),
        (x.index,),
        lambda g: (np.expand_dims(g, axis),),
    )


def take(x, indices):
    """Rows ``x[indices]`` along axis 0, any index shape."""
    indices = np.asarray(indices, dtype=np.int64)
    shape = x.shape

    def vjp(g):
        gx = np.zeros(shape)
        np.add.at(gx, indices, g)
        return (gx,)

    return x.tape._push("take", x.value[indices], (x.index,), vjp)


def max(x, axis):  # noqa: A001
    """Max over ``axis``; the gradient goes to the first maximal entry."""
    xv = x.value
    arg = np.expand_dims(np.argmax(xv, axis=axis), axis)

    def vjp(g):
        gx = np.zeros(xv.shape)
        np.put_along_axis(gx, arg, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return x.tape._push("max", np.max(xv, axis=axis), (x.index,), vjp)


def sum(x, axis=None):  # noqa: A001
    shape = x.shape

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return x.tape._push("sum", np.sum(x.value, axis=axis), (x.index,), vjp)


def mean(x, axis=None):
    shape = x.shape
    count = x.value.size if axis is None else shape[axis]

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape).copy(),)

    return x.tape._push("mean", np.mean(x.value, axis=axis), (x.index,), vjp)


def softmax_cross_entropy(logits, labels):
    """Mean cross entropy of ``logits`` (B x n_classes) against integer
    ``labels`` (B,)."""
    labels = np.asarray(labels, dtype=np.int64)
    zv = logits.value
    if zv.ndim != 2 or labels.shape != (zv.shape[0],):
        raise ShapeMismatch(
            f"logits {zv.shape} and labels {labels.shape} do not match"
        )
    shifted = zv - zv.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_prob = shifted - log_norm[:, None]
    batch = np.arange(zv.shape[0])
    loss = -np.mean(log_prob[batch, labels])

    def vjp(g):
        dz = np.exp(log_prob)
        dz[batch, labels] -= 1.0
        return (g * dz / zv.shape[0],)

    return logits.tape._push(
        "softmax_cross_entropy", loss, (logits.index,), vjp
    )


def backward(tape, loss, loss_seed=1.0):
    """Gradients of the scalar ``loss`` for every parameter of ``tape``.

    Returns a dict ``{parameter name: gradient}``; parameters the loss does
    not depend on get zero gradients.

    Raises:
        NonScalarLoss: ``loss`` does not hold a single value.
    """
    if loss.tape is not tape:
        raise ValueError("loss was not recorded on this tape")
    if loss.value.size != 1:
        raise NonScalarLoss(f"loss must be a scalar, got shape {loss.shape}")

    adjoints = {loss.index: np.full(loss.shape, float(loss_seed))}
    for rec in tape.records:
        rec.n_visits = 0
    for index in range(loss.index, -1, -1):
        rec = tape.records[index]
        rec.n_visits += 1
        g = adjoints.pop(index, None)
        if g is None or rec.vjp is None:
            if g is not None:
                adjoints[index] = g
            continue
        for inp, gi in zip(rec.inputs, rec.vjp(g)):
            if inp in adjoints:
                adjoints[inp] = adjoints[inp] + gi
            else:
                adjoints[inp] = gi

    grads = {}
    for name, index in tape.parameters.items():
        value = tape.records[index].value
        grads[name] = np.asarray(
            adjoints.get(index, np.zeros(value.shape)), dtype=np.float64
        ).reshape(value.shape)
    log.debug(f"backward over {loss.index + 1} records")
    return grads


@dataclass
class GradReport:
    """Largest analytic vs finite difference error of every parameter."""

    h: float
    max_abs: Dict[str, float] = field(default_factory=dict)
    max_rel: Dict[str, float] = field(default_factory=dict)

    @property
    def worst_abs(self):
        return float(np.max(list(self.max_abs.values()), initial=0.0))

    @property
    def worst_rel(self):
        return float(np.max(list(self.max_rel.values()), initial=0.0))

    def passed(self, rel_tol=1e-4):
        return self.worst_rel < rel_tol

    def to_dict(self):
        return {
            "h": self.h,
            "max_abs": dict(self.max_abs),
            "max_rel": dict(self.max_rel),
            "worst_abs": self.worst_abs,
            "worst_rel": self.worst_rel,
        }


# relative errors are computed against max(|analytic|, |numeric|, floor)
_REL_FLOOR = 1e-4


def _evaluate(f, params):
    tape = Tape()
    pvars = {name: tape.parameter(name, arr) for name, arr in params.items()}
    loss = f(tape, pvars)
    return tape, loss


def finite_difference_check(f, params, h=1e-5):
    """Compare ``backward`` with central differences of ``f``.

    ``f(tape, pvars)`` must build a scalar loss on ``tape`` from the
    parameter Vars ``pvars`` (same keys as ``params``).
    """
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h}")
    params = {
        name: np.array(arr, dtype=np.float64) for name, arr in params.items()
    }
    tape, loss = _evaluate(f, params)
    analytic = backward(tape, loss)

    report = GradReport(h=h)
    for name, arr in params.items():
        numeric = np.zeros(arr.shape)
        for ii in np.ndindex(arr.shape):
            shifted = dict(params)
            plus = arr.copy()
            plus[ii] += h
            shifted[name] = plus
            f_plus = float(_evaluate(f, shifted)[1].value)
            minus = arr.copy()
            minus[ii] -= h
            shifted[name] = minus
            f_minus = float(_evaluate(f, shifted)[1].value)
            numeric[ii] = (f_plus - f_minus) / (2.0 * h)

        err = np.abs(analytic[name] - numeric)
        denom = np.maximum(
            np.maximum(np.abs(analytic[name]), np.abs(numeric)), _REL_FLOOR
        )
        report.max_abs[name] = float(np.max(err, initial=0.0))
        report.max_rel[name] = float(np.max(err / denom, initial=0.0))
        log.debug(
            f"gradcheck {name}: abs {report.max_abs[name]:.3e} "
            f"rel {report.max_rel[name]:.3e}"
        )
    return report
