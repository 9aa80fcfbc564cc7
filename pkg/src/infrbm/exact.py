"""Exact inference by enumerating all binary states of one layer.

State index ``s`` maps to bits ``x_j = (s >> j) & 1``.  Enumeration streams
over fixed-size chunks and merges partial log-sum-exps in index order, so the
result does not depend on chunking.
"""

import numpy as np

from .errors import CapacityError, DimensionError
from .model import RbmModel, as_rbm, from_standard_rbm, hidden_conditional, unnormalized_log_prob
from .numerics import StreamingLogSumExp, softplus

MAX_ENUM_BITS = 25
CHUNK_BITS = 16


def _guard(nbits, what):
    if nbits > MAX_ENUM_BITS:
        raise CapacityError(f"exact enumeration over {nbits} {what} bits exceeds the 2^{MAX_ENUM_BITS} guard")


def states(nbits, start=0, stop=None):
    """Binary states [start, stop) as a float array of shape (stop - start, nbits)."""
    stop = 2**nbits if stop is None else stop
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(nbits)) & 1).astype(np.float64)


def state_index(bits):
    bits = np.asarray(bits, dtype=np.int64)
    return (bits << np.arange(bits.shape[-1])).sum(axis=-1)


def _chunks(nbits):
    total = 2**nbits
    step = 2**CHUNK_BITS
    for start in range(0, total, step):
        yield states(nbits, start, min(total, start + step))


def _as_mix(model):
    return from_standard_rbm(model) if isinstance(model, RbmModel) else model


def _visible_log_partition(mix):
    _guard(mix.visible_dim, "visible")
    acc = StreamingLogSumExp()
    for v in _chunks(mix.visible_dim):
        acc.add(unnormalized_log_prob(mix, v))
    return acc.value


def _hidden_log_partition(rbm):
    _guard(rbm.hidden_dim, "hidden")
    acc = StreamingLogSumExp()
    for h in _chunks(rbm.hidden_dim):
        acc.add(softplus(h @ rbm.weights.T + rbm.bias).sum(axis=1))
    return acc.value


def exact_log_partition(model, side="auto"):
    """log Z by enumeration.

    ``side='auto'`` enumerates the smaller layer for standard models and the
    visible layer for fractional mixtures.
    """
    mix = _as_mix(model)
    standard = mix.is_standard() or mix.n_atoms == 0
    if side == "auto":
        side = "hidden" if standard and mix.n_atoms < mix.visible_dim else "visible"
    if side == "visible":
        return _visible_log_partition(mix)
    if side == "hidden":
        if not standard:
            raise ValueError("hidden-side enumeration needs a standard (unit-mass) model")
        rbm = RbmModel(mix.weights.T, mix.bias)
        return _hidden_log_partition(rbm)
    raise ValueError(f"unknown side {side!r}")


def visible_log_probs(model, log_z=None):
    """Normalized log p(v) for all 2^|v| states, in state-index order."""
    mix = _as_mix(model)
    _guard(mix.visible_dim, "visible")
    if log_z is None:
        log_z = exact_log_partition(mix)
    return unnormalized_log_prob(mix, states(mix.visible_dim)) - log_z


def visible_distribution(model):
    return np.exp(visible_log_probs(model))


def exact_avg_loglik(model, data):
    """Mean normalized log-likelihood of the rows of ``data``."""
    mix = _as_mix(model)
    if data.visible_dim != mix.visible_dim:
        raise DimensionError(f"data has {data.visible_dim} columns, model {mix.visible_dim}")
    return float(np.mean(unnormalized_log_prob(mix, data.as_float()))) - exact_log_partition(mix)


def model_moments(model):
    """Exact E[v] and E[v h^T] (hidden at its conditional mean) under a standard RBM."""
    rbm = as_rbm(model)
    _guard(rbm.visible_dim, "visible")
    log_z = exact_log_partition(rbm)
    ev = np.zeros(rbm.visible_dim)
    evh = np.zeros((rbm.visible_dim, rbm.hidden_dim))
    for v in _chunks(rbm.visible_dim):
        p = np.exp(unnormalized_log_prob(rbm, v) - log_z)
        ev += p @ v
        evh += (v * p[:, None]).T @ hidden_conditional(rbm, v)
    return ev, evh


def exact_loglik_gradient(model, data):
    """Average log-likelihood gradient (dL/dW, dL/db) with the exact negative phase."""
    rbm = as_rbm(model)
    if data.visible_dim != rbm.visible_dim:
        raise DimensionError(f"data has {data.visible_dim} columns, model {rbm.visible_dim}")
    v = data.as_float()
    mu = hidden_conditional(rbm, v)
    ev, evh = model_moments(rbm)
    dW = v.T @ mu / v.shape[0] - evh
    db = v.mean(axis=0) - ev
    return dW, db


def exact_sample(model, n, rng):
    """Draw ``n`` i.i.d. visible vectors from the exact distribution (small |v| only)."""
    mix = _as_mix(model)
    p = visible_distribution(mix)
    idx = rng.choice(p.shape[0], size=n, p=p / p.sum())
    return states(mix.visible_dim)[idx].astype(np.uint8)
