"""Likelihood evaluation (AIS, exact) and hidden-feature classification."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .model import as_rbm, hidden_conditional, unnormalized_log_prob
from .numerics import logit, logmeanexp, logsumexp, sigmoid, softplus
from .rng import as_stream

BASE_MODES = ("zero", "data_marginal")
STANDARD_SEGMENTS = (((0.0, 0.5), 500), ((0.5, 0.9), 4000), ((0.9, 1.0), 10000))


def schedule_from_segments(segments):
    """Piecewise-uniform inverse temperatures.

    Each ((lo, hi), count) segment contributes ``count`` evenly spaced values
    on [lo, hi); the final segment includes its right end.
    """
    parts = []
    for i, ((lo, hi), count) in enumerate(segments):
        last = i == len(segments) - 1
        parts.append(np.linspace(lo, hi, int(count), endpoint=last))
    return np.concatenate(parts) if parts else np.zeros(0)


def uniform_schedule(n):
    return np.linspace(0.0, 1.0, int(n))


def standard_schedule():
    """14,500 temperatures: 500 on [0, 0.5), 4,000 on [0.5, 0.9), 10,000 on [0.9, 1]."""
    return schedule_from_segments(STANDARD_SEGMENTS)


def schedule_preset(name):
    """'standard', 'uniform:<n>', or 'single' (the two-point {0, 1} schedule)."""
    if name == "standard":
        return standard_schedule()
    if name == "single":
        return np.array([0.0, 1.0])
    if name.startswith("uniform:"):
        return uniform_schedule(int(name.split(":", 1)[1]))
    raise ValueError(f"unknown schedule preset {name!r}")


def check_schedule(betas):
    b = np.asarray(betas, dtype=np.float64)
    if b.ndim != 1 or b.size < 2:
        raise ValueError("schedule needs at least two inverse temperatures")
    if not np.all(np.isfinite(b)):
        raise ValueError("schedule contains non-finite values")
    if b[0] != 0.0 or b[-1] != 1.0:
        raise ValueError(f"schedule must start at 0 and end at 1, got {b[0]} .. {b[-1]}")
    if np.any(np.diff(b) < 0):
        raise ValueError("schedule must be non-decreasing")
    return b


@dataclass(frozen=True, eq=False)
class AisConfig:
    schedule: np.ndarray = field(default_factory=standard_schedule)
    runs: int = 100
    base_bias_mode: str = "data_marginal"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "schedule", check_schedule(self.schedule))
        if self.runs < 2:
            raise ValueError(f"runs must be >= 2, got {self.runs}")
        if self.base_bias_mode not in BASE_MODES:
            raise ValueError(f"base_bias_mode must be one of {BASE_MODES}")


@dataclass(frozen=True, eq=False)
class LikelihoodEstimate:
    log_z_mean: float
    log_z_std: float
    log_weights: np.ndarray
    avg_test_loglik: float = None
    n_test: int = 0

    @property
    def error_bar(self):
        """Three standard deviations, the convention for plotted error bars."""
        return 3.0 * self.log_z_std


def base_bias(model, mode="data_marginal", data=None):
    if mode == "zero":
        return np.zeros(model.visible_dim)
    if data is None:
        raise ValueError("base_bias_mode 'data_marginal' needs data")
    if data.visible_dim != model.visible_dim:
        raise DimensionError(f"data has {data.visible_dim} columns, model {model.visible_dim}")
    m = np.clip(data.as_float().mean(axis=0), 1e-6, 1 - 1e-6)
    return np.clip(logit(m), -4.0, 4.0)


def _log_pstar(v, vW, beta, b_a, b):
    # marginal of the joint-space geometric path at inverse temperature beta
    return softplus(beta * vW).sum(axis=1) + v @ ((1.0 - beta) * b_a + beta * b)


def ais_log_partition(model, config, data=None):
    """Estimate log Z of a standard RBM by annealed importance sampling.

    Intermediate models interpolate the joint energies of a zero-weight base
    RBM with visible bias b_A and the target:
    p_beta(v, h) ~ exp((1-beta) b_A.v + beta (b.v + v.W h)).  Each temperature
    applies one h-then-v Gibbs sweep of p_beta.  The reported std is the
    standard error of the log-mean-exp estimate (delta method over runs).
    """
    rbm = as_rbm(model)
    betas = check_schedule(config.schedule)
    b_a = base_bias(rbm, config.base_bias_mode, data)
    W, b = rbm.weights, rbm.bias
    R, H = config.runs, rbm.hidden_dim
    stream = as_stream(config.seed)
    hs, vs = stream.split(1), stream.split(2)

    v = (vs.generator(0).random((R, rbm.visible_dim)) < sigmoid(b_a)).astype(np.float64)
    logw = np.zeros(R)
    vW = v @ W
    for k in range(1, betas.size):
        lo, hi = betas[k - 1], betas[k]
        if hi != lo:
            logw += _log_pstar(v, vW, hi, b_a, b) - _log_pstar(v, vW, lo, b_a, b)
        if k == betas.size - 1:
            break
        ph = sigmoid(hi * vW)
        h = (hs.generator(k).random((R, H)) < ph).astype(np.float64)
        pv = sigmoid(hi * (h @ W.T) + (1.0 - hi) * b_a + hi * b)
        v = (vs.generator(k).random(pv.shape) < pv).astype(np.float64)
        vW = v @ W

    log_z_base = float(softplus(b_a).sum()) + H * math.log(2.0)
    mean = logmeanexp(logw)
    # std of mean(w) / mean(w), computed in the log domain
    rel = np.exp(logw - mean)
    std = float(np.std(rel, ddof=1) / math.sqrt(R))
    return LikelihoodEstimate(log_z_base + mean, std, logw)


def avg_test_loglik(model, test, log_z):
    """Mean of [sum_i softplus(w_i . v) + b . v] over the test set, minus log Z."""
    log_z = float(log_z)
    if not math.isfinite(log_z):
        raise ValueError(f"log_z must be finite, got {log_z}")
    if test.visible_dim != model.visible_dim:
        raise DimensionError(f"test data has {test.visible_dim} columns, model {model.visible_dim}")
    return float(np.mean(unnormalized_log_prob(model, test.as_float()))) - log_z


def evaluate_ais(model, test, config, data=None):
    """AIS estimate with the average test log-likelihood filled in."""
    est = ais_log_partition(model, config, data if data is not None else test)
    return LikelihoodEstimate(est.log_z_mean, est.log_z_std, est.log_weights,
                              avg_test_loglik(model, test, est.log_z_mean), test.count)


def extract_features(model, data):
    """Row n is E[h | v^n] = sigmoid(W^T v^n)."""
    rbm = as_rbm(model)
    if data.visible_dim != rbm.visible_dim:
        raise DimensionError(f"data has {data.visible_dim} columns, model {rbm.visible_dim}")
    return hidden_conditional(rbm, data.as_float())


def _design(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError("features must be a 2-d array")
    return np.hstack([x, np.ones((x.shape[0], 1))])


def softmax_fit(features, labels, num_classes=None, reg=1e-3, iters=500, lr=None):
    """Multinomial logistic regression by full-batch gradient descent.

    The step size defaults to the inverse of a Lipschitz bound on the gradient.
    Returns the (d+1, K) weight matrix (last row is the intercept).
    """
    X = _design(features)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise DimensionError(f"{y.shape[0] if y.ndim else 0} labels for {X.shape[0]} rows")
    k = int(num_classes if num_classes is not None else y.max() + 1)
    if np.unique(y).size < 2:
        raise ValueError("softmax regression needs at least two distinct classes")
    Y = np.zeros((X.shape[0], k))
    Y[np.arange(X.shape[0]), y] = 1.0
    if lr is None:
        lr = 1.0 / (0.5 * np.sum(X * X) / X.shape[0] + reg)
    theta = np.zeros((X.shape[1], k))
    for _ in range(iters):
        s = X @ theta
        p = np.exp(s - logsumexp(s, axis=1)[:, None])
        grad = X.T @ (p - Y) / X.shape[0]
        grad[:-1] += reg * theta[:-1]
        theta -= lr * grad
    return theta


def softmax_predict(theta, features):
    return np.argmax(_design(features) @ theta, axis=1)


def softmax_classify(train_features, train_labels, test_features, test_labels, reg=1e-3, iters=500):
    """Test 0-1 error of softmax regression trained on the training features."""
    train_features = np.asarray(train_features, dtype=np.float64)
    test_features = np.asarray(test_features, dtype=np.float64)
    if train_features.ndim != 2 or test_features.ndim != 2 or train_features.shape[1] != test_features.shape[1]:
        raise DimensionError("train and test features must be 2-d with equal widths")
    test_labels = np.asarray(test_labels, dtype=np.int64)
    if test_labels.shape != (test_features.shape[0],):
        raise DimensionError("test labels do not match test rows")
    k = int(max(np.max(train_labels), np.max(test_labels)) + 1)
    theta = softmax_fit(train_features, train_labels, k, reg, iters)
    return float(np.mean(softmax_predict(theta, test_features) != test_labels))
