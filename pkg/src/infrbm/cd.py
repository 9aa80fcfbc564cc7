"""Contrastive divergence (CD-k) and persistent CD for standard RBMs."""

import time
from dataclasses import asdict, dataclass

import numpy as np

from .data import require_nonempty
from .errors import DimensionError
from .exact import exact_avg_loglik
from .model import RbmModel, unnormalized_log_prob
from .numerics import logit, sigmoid
from .report import CD_COLUMNS, GapEarlyStopping, TrainReport
from .rng import as_stream
from .sampling import chains_from, gibbs_step, init_chains

LEARNING_RATES = (0.05, 0.02, 0.01, 0.005)
MINIBATCH_SIZES = (10, 20, 50, 100, 200)
RESTART_METRICS = ("gap", "exact")


@dataclass(frozen=True)
class CdConfig:
    k: int = 10
    learning_rate: float = 0.05
    minibatch: int = 100
    epochs: int = 200
    persistent: bool = False
    hidden_units: int = 100
    init_scale: float = 0.01
    restarts: int = 1
    restart_metric: str = "gap"
    early_stop_patience: int = 0
    gap_tolerance: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.hidden_units < 1:
            raise ValueError(f"hidden_units must be >= 1, got {self.hidden_units}")
        if self.minibatch < 1 or self.epochs < 0 or self.restarts < 1:
            raise ValueError("minibatch and restarts must be >= 1, epochs >= 0")
        if self.restart_metric not in RESTART_METRICS:
            raise ValueError(f"restart_metric must be one of {RESTART_METRICS}")

    def as_dict(self):
        return asdict(self)


def hyperparameter_grid():
    """Learning-rate x minibatch presets for validation-based selection."""
    return [{"learning_rate": lr, "minibatch": mb} for lr in LEARNING_RATES for mb in MINIBATCH_SIZES]


def cd_gradient(model, batch, chains, k):
    """CD-k estimate of the average log-likelihood gradient.

    Hidden units enter both phases at their conditional means; sampled hidden
    bits only drive the chains.  Returns (dW, db, advanced chains).
    """
    v = np.asarray(batch.as_float() if hasattr(batch, "as_float") else batch, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] < 1:
        raise ValueError("batch must be a nonempty 2-d array")
    if v.shape[1] != model.visible_dim or chains.visible_dim != model.visible_dim:
        raise DimensionError("batch, chains and model disagree on visible_dim")
    if k < 1:
        raise ValueError("k must be >= 1")
    for _ in range(k):
        chains = gibbs_step(model, chains)
    vn = chains.v
    mu = sigmoid(v @ model.weights)
    mun = sigmoid(vn @ model.weights)
    dW = v.T @ mu / v.shape[0] - vn.T @ mun / vn.shape[0]
    db = v.mean(axis=0) - vn.mean(axis=0)
    return dW, db, chains


def positive_phase(model, batch):
    v = np.asarray(batch, dtype=np.float64)
    return v.T @ sigmoid(v @ model.weights) / v.shape[0]


def random_init(data, hidden_units, scale, seed):
    """W ~ N(0, scale^2); b = logit of data means clamped to [-4, 4]."""
    g = as_stream(seed).split(0x1217).generator()
    W = g.normal(0.0, scale, (data.visible_dim, hidden_units))
    m = np.clip(data.as_float().mean(axis=0), 1e-6, 1 - 1e-6)
    return RbmModel(W, np.clip(logit(m), -4.0, 4.0))


def _ull(model, data):
    return float(np.mean(unnormalized_log_prob(model, data.as_float())))


def _train_once(data, validation, config, model, stream):
    v_all = data.as_float()
    n = v_all.shape[0]
    W, b = model.weights.copy(), model.bias.copy()
    pool = None
    if config.persistent:
        pool = init_chains(data.visible_dim, config.minibatch, stream.split(7), b)
    stopper = GapEarlyStopping(config.early_stop_patience, config.gap_tolerance)
    report = TrainReport(CD_COLUMNS)
    snapshots = {0: model}
    start = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        perm = stream.split(1, epoch).generator().permutation(n)
        for i, lo in enumerate(range(0, n, config.minibatch)):
            batch = v_all[perm[lo:lo + config.minibatch]]
            current = RbmModel(W, b)
            if pool is None:
                chains = chains_from(batch, stream.split(2, epoch, i))
            else:
                chains = pool
            dW, db, chains = cd_gradient(current, batch, chains, config.k)
            if pool is not None:
                pool = chains
            W = W + config.learning_rate * dW
            b = b + config.learning_rate * db
        model = RbmModel(W, b)
        tr, va = _ull(model, data), _ull(model, validation)
        report.append(epoch=epoch, train_ull=tr, valid_ull=va, gap=tr - va,
                      seconds=time.perf_counter() - start)
        snapshots[epoch] = model
        if stopper.update(epoch, tr - va):
            report.stopped_early = True
            break
    report.selected = stopper.selected if report.records else 0
    chosen = snapshots[report.selected if report.selected is not None else 0]
    return chosen, report


def cd_train(data, validation, config, init=None):
    """Train a standard RBM by CD-k / PCD with minibatch SGD.

    With ``restarts > 1`` each restart uses an independent seed stream and the
    one with the smallest final train-validation gap (or, with
    ``restart_metric='exact'``, the highest exact validation likelihood) wins.
    ``init`` (an RbmModel, e.g. converted from a Frank-Wolfe mixture) replaces
    the random initialization and must have ``hidden_units`` columns.
    """
    require_nonempty(data, "training data")
    require_nonempty(validation, "validation data")
    if data.visible_dim != validation.visible_dim:
        raise DimensionError("training and validation data have different visible_dim")
    if init is not None and init.visible_dim != data.visible_dim:
        raise DimensionError(f"init model has visible_dim {init.visible_dim}, data has {data.visible_dim}")
    if init is not None and init.hidden_dim != config.hidden_units:
        raise DimensionError(f"init model has {init.hidden_dim} hidden units, config asks for {config.hidden_units}")
    stream = as_stream(config.seed)
    best = None
    for r in range(config.restarts):
        rs = stream.split(r)
        start = init if init is not None else random_init(data, config.hidden_units, config.init_scale, rs)
        model, report = _train_once(data, validation, config, start, rs)
        if config.restart_metric == "exact":
            score = exact_avg_loglik(model, validation)
        else:
            score = -(report.records[-1]["gap"] if report.records else 0.0)
        if best is None or score > best[0]:
            best = (score, model, report)
        if init is not None:
            break
    return best[1], best[2]

