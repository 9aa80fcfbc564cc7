"""Overflow-free softplus / logistic helpers and log-domain reductions."""

import math

import numpy as np


def softplus(x):
    """log(1 + exp(x)) without overflow.

    Scalars are validated and returned as ``float``; arrays are processed
    element-wise.  Both paths use the same formula, so results agree bitwise.
    """
    if np.ndim(x) == 0:
        x = float(x)
        if not math.isfinite(x):
            raise ValueError(f"softplus requires a finite argument, got {x!r}")
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x > 0, x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return float(out) if out.ndim == 0 else out


def sigmoid(x):
    """Logistic function 1 / (1 + exp(-x)), stable for both tails."""
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if scalar else out


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def logsumexp(a, axis=None):
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return -np.inf
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore", under="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def logmeanexp(a):
    a = np.asarray(a, dtype=np.float64)
    return logsumexp(a) - math.log(a.size)


class StreamingLogSumExp:
    """Accumulates log(sum(exp(x))) over chunks in a fixed order."""

    def __init__(self):
        self.value = -math.inf

    def add(self, chunk):
        self.value = float(np.logaddexp(self.value, logsumexp(chunk)))
        return self
