"""Single-hidden-layer tanh regressor with min-max input and output scaling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def mre(targets, predictions) -> float:
    """Mean relative error in percent."""
    t = np.asarray(targets, dtype=float).ravel()
    y = np.asarray(predictions, dtype=float).ravel()
    if t.shape != y.shape:
        raise ValueError(f"length mismatch: {t.size} targets vs {y.size} predictions")
    if t.size == 0:
        raise ValueError("mre needs at least one sample")
    if np.any(t == 0):
        raise ZeroDivisionError("mre is undefined for zero-valued targets")
    return float(100.0 * np.mean(np.abs(t - y) / np.abs(t)))


def minmax_range(values) -> np.ndarray:
    """(min, max) per column; a constant column gets a symmetric pad so max > min."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    lo, hi = v.min(axis=0), v.max(axis=0)
    flat = hi <= lo
    pad = np.where(lo == 0, 1.0, 0.5 * np.abs(lo))
    lo = np.where(flat, lo - pad, lo)
    hi = np.where(flat, hi + pad, hi)
    return np.stack([lo, hi], axis=1)


@dataclass(frozen=True)
class NetworkParams:
    """Weights plus frozen scaling statistics.

    Shapes: ``w1`` (n_hidden, n_in), ``b1`` (n_hidden,), ``w2`` (n_hidden,),
    ``b2`` scalar, ``in_scale`` (n_in, 2) rows of (min, max), ``out_scale`` (2,).
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    in_scale: np.ndarray
    out_scale: np.ndarray

    def __post_init__(self):
        w1 = np.atleast_2d(np.asarray(self.w1, dtype=float))
        h, n = w1.shape
        b1 = np.asarray(self.b1, dtype=float).reshape(h)
        w2 = np.asarray(self.w2, dtype=float).reshape(h)
        in_scale = np.asarray(self.in_scale, dtype=float).reshape(n, 2)
        out_scale = np.asarray(self.out_scale, dtype=float).reshape(2)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", float(self.b2))
        object.__setattr__(self, "in_scale", in_scale)
        object.__setattr__(self, "out_scale", out_scale)
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("network weights must be finite")
        if np.any(in_scale[:, 1] <= in_scale[:, 0]) or out_scale[1] <= out_scale[0]:
            raise ValueError("scaling ranges need max > min")

    @property
    def n_in(self) -> int:
        return self.w1.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def n_weights(self) -> int:
        return self.n_hidden * (self.n_in + 2) + 1

    @property
    def theta(self) -> np.ndarray:
        """Trainable parameters flattened in the order w1 (row-major), b1, w2, b2."""
        return np.concatenate([self.w1.ravel(), self.b1, self.w2, [self.b2]])

    def with_theta(self, theta) -> "NetworkParams":
        w1, b1, w2, b2 = unpack(theta, self.n_in, self.n_hidden)
        return NetworkParams(w1, b1, w2, b2, self.in_scale, self.out_scale)

    @classmethod
    def zeros(cls, n_in: int, n_hidden: int, in_scale=None, out_scale=(-1.0, 1.0)) -> "NetworkParams":
        if in_scale is None:
            in_scale = np.tile([-1.0, 1.0], (n_in, 1))
        return cls(np.zeros((n_hidden, n_in)), np.zeros(n_hidden), np.zeros(n_hidden), 0.0, in_scale, out_scale)


def unpack(theta, n_in: int, n_hidden: int):
    theta = np.asarray(theta, dtype=float)
    k = n_hidden * n_in
    if theta.size != k + 2 * n_hidden + 1:
        raise ValueError(f"expected {k + 2 * n_hidden + 1} parameters, got {theta.size}")
    return (theta[:k].reshape(n_hidden, n_in), theta[k:k + n_hidden],
            theta[k + n_hidden:k + 2 * n_hidden], float(theta[-1]))


def scale_inputs(params: NetworkParams, inputs) -> np.ndarray:
    a = np.asarray(inputs, dtype=float)
    lo, hi = params.in_scale[:, 0], params.in_scale[:, 1]
    return 2.0 * (a - lo) / (hi - lo) - 1.0


def scale_outputs(params: NetworkParams, y) -> np.ndarray:
    lo, hi = params.out_scale
    return 2.0 * (np.asarray(y, dtype=float) - lo) / (hi - lo) - 1.0


def unscale_outputs(params: NetworkParams, z) -> np.ndarray:
    lo, hi = params.out_scale
    return lo + 0.5 * (np.asarray(z, dtype=float) + 1.0) * (hi - lo)


def _hidden(params: NetworkParams, u: np.ndarray) -> np.ndarray:
    return np.tanh(u @ params.w1.T + params.b1)


def forward_scaled(params: NetworkParams, u: np.ndarray) -> np.ndarray:
    """Network output in [-1, 1] units for already-scaled inputs ``u`` of shape (N, n_in)."""
    return _hidden(params, u) @ params.w2 + params.b2


def forward(params: NetworkParams, inputs):
    """Predicted pressure gradient for one input vector (scalar) or a batch (N,).

    Inputs outside the training range are mapped linearly, never clamped.
    """
    a = np.asarray(inputs, dtype=float)
    single = a.ndim == 1
    u = scale_inputs(params, np.atleast_2d(a))
    y = unscale_outputs(params, forward_scaled(params, u))
    return float(y[0]) if single else y


def jacobian_scaled(params: NetworkParams, u: np.ndarray) -> np.ndarray:
    """d(scaled output)/d(theta) for scaled inputs, shape (N, n_weights)."""
    h = _hidden(params, u)
    dz_da = (1.0 - h * h) * params.w2
    n = u.shape[0]
    d_w1 = (dz_da[:, :, None] * u[:, None, :]).reshape(n, -1)
    return np.hstack([d_w1, dz_da, h, np.ones((n, 1))])


def jacobian(params: NetworkParams, batch) -> np.ndarray:
    """Exact derivatives of :func:`forward` with respect to ``params.theta``.

    Rows follow the batch; scaling statistics are constants.
    """
    a = np.atleast_2d(np.asarray(batch, dtype=float))
    if a.shape[0] == 0:
        raise ValueError("jacobian needs a non-empty batch")
    lo, hi = params.out_scale
    return 0.5 * (hi - lo) * jacobian_scaled(params, scale_inputs(params, a))
