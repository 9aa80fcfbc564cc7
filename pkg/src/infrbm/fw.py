"""Frank-Wolfe training of the infinite RBM: one hidden unit per iteration.

Iteration t draws samples from the current model, finds the single weight
vector that best separates data from model samples (the linear-minimization
oracle over distributions q reduces to this), appends it as a unit-mass atom
(equal masses == step size 1/t), sets the temperature to t and refits the
visible bias.
"""

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .data import require_nonempty
from .errors import DimensionError
from .exact import states, visible_distribution
from .model import WeightAtomMix, fractional_proposal_rbm, to_standard_rbm, unnormalized_log_prob
from .numerics import sigmoid, softplus
from .optim import lbfgs
from .report import FW_COLUMNS, GapEarlyStopping, TrainReport
from .rng import as_stream
from .sampling import SampleBuffer, gibbs_step, init_chains, mh_fractional_step, sample_chains

ALPHA_MODES = ("count", "gradient")
NEGATIVE_PHASES = ("sampled", "exact")


@dataclass(frozen=True)
class FwConfig:
    lam: float = 0.1
    eta: float = 0.05
    max_units: int = 700
    inner_tol: float = 1e-5
    inner_max_iters: int = 500
    inner_memory: int = 10
    samples_per_iter: int = 500
    minibatch: int = 100
    bias_epochs: int = 5
    alpha_mode: str = "count"
    alpha_steps: int = 10
    alpha_lr: float = 0.01
    early_stop_patience: int = 3
    eval_every: int = 20
    gap_tolerance: float = 0.0
    n_chains: int = 20
    burn_in: int = 200
    thinning: int = 2
    persistent: bool = True
    init_scale: float = 0.01
    negative_phase: str = "sampled"
    seed: int = 0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if not self.eta >= 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if self.max_units < 1:
            raise ValueError(f"max_units must be >= 1, got {self.max_units}")
        if self.samples_per_iter < 1 or self.minibatch < 1:
            raise ValueError("samples_per_iter and minibatch must be >= 1")
        if not self.inner_tol > 0:
            raise ValueError(f"inner_tol must be > 0, got {self.inner_tol}")
        if self.alpha_mode not in ALPHA_MODES:
            raise ValueError(f"alpha_mode must be one of {ALPHA_MODES}")
        if self.negative_phase not in NEGATIVE_PHASES:
            raise ValueError(f"negative_phase must be one of {NEGATIVE_PHASES}")
        if self.eval_every < 1 or self.n_chains < 1 or self.thinning < 1 or self.burn_in < 0:
            raise ValueError("eval_every, n_chains, thinning must be >= 1 and burn_in >= 0")

    def as_dict(self):
        return asdict(self)


# -- inner problem ------------------------------------------------------------

def _rows(x):
    if isinstance(x, SampleBuffer):
        return x.as_float(), None
    if isinstance(x, tuple):
        rows, weights = x
        return np.asarray(rows, dtype=np.float64), np.asarray(weights, dtype=np.float64)
    if hasattr(x, "as_float"):
        return x.as_float(), None
    return np.asarray(x, dtype=np.float64), None


def _mean_rows(values, weights):
    if weights is None:
        return values.mean(axis=0)
    return weights @ values


def _inner(w, vd, vs, ps, lam):
    ad, as_ = vd @ w, vs @ w
    value = 0.5 * lam * (w @ w) + _mean_rows(softplus(as_), ps) - softplus(ad).mean()
    if ps is None:
        model_term = vs.T @ sigmoid(as_) / vs.shape[0]
    else:
        model_term = vs.T @ (ps * sigmoid(as_))
    grad = lam * w + model_term - vd.T @ sigmoid(ad) / vd.shape[0]
    return float(value), grad


def inner_objective(w, data, model_samples, lam):
    """(lam/2)|w|^2 + mean_s softplus(w.v_s) - mean_n softplus(w.v_n), and its gradient.

    ``model_samples`` is a SampleBuffer, an array of rows, or ``(rows, probs)``
    for an exactly weighted model expectation.
    """
    vd, _ = _rows(data)
    vs, ps = _rows(model_samples)
    w = np.asarray(w, dtype=np.float64)
    if vd.shape[0] < 1 or vs.shape[0] < 1:
        raise ValueError("inner objective needs nonempty data and model samples")
    if not (vd.shape[1] == vs.shape[1] == w.shape[0]):
        raise DimensionError(f"dimensions disagree: w {w.shape[0]}, data {vd.shape[1]}, samples {vs.shape[1]}")
    return _inner(w, vd, vs, ps, lam)


@dataclass
class InnerResult:
    w: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    initial_value: float


def solve_inner(data, model_samples, lam, config=None, seed=None):
    """Approximate argmin of the inner objective by L-BFGS.

    Start: the steepest-descent direction at w = 0 plus N(0, 0.01^2) noise from
    a seeded stream; the noise breaks the symmetry when data and model means
    coincide (w = 0 is then stationary).
    """
    config = config or FwConfig(lam=lam)
    vd, _ = _rows(data)
    vs, ps = _rows(model_samples)
    if vd.shape[1] != vs.shape[1]:
        raise DimensionError("data and model samples have different dimensions")
    fun = lambda w: _inner(w, vd, vs, ps, lam)
    _, g0 = fun(np.zeros(vd.shape[1]))
    noise = as_stream(config.seed if seed is None else seed).split(0x1A).generator().normal(0.0, 0.01, vd.shape[1])
    w0 = -g0 + noise
    f0, _ = fun(w0)
    res = lbfgs(fun, w0, tol=config.inner_tol, max_iters=config.inner_max_iters, memory=config.inner_memory)
    return InnerResult(res.x, res.value, res.grad_norm, res.iterations, res.converged, f0)


# -- bias and temperature ------------------------------------------------------

class PersistentSampler:
    """Pool of persistent chains supplying model minibatches for bias updates.

    Each call advances every chain one step (block Gibbs for standard models,
    the MH-corrected kernel otherwise) and returns the chains' mean visible vector.
    """

    def __init__(self, dim, size, seed, bias=None):
        self.state = init_chains(dim, size, seed, bias)

    def draw(self, mix):
        if mix.is_standard():
            self.state = gibbs_step(to_standard_rbm(mix), self.state)
        else:
            self.state = mh_fractional_step(mix, self.state)
        return self.state.v

    def __call__(self, mix):
        return self.draw(mix).mean(axis=0)


def exact_negative_phase(mix):
    """E_p[v] by enumeration (small |v|); drop-in for a PersistentSampler."""
    return visible_distribution(mix) @ states(mix.visible_dim)


def bias_steps(config, n_data):
    return config.bias_epochs * math.ceil(n_data / config.minibatch)


def update_bias(mix, data, config, sampler, steps=None):
    """Stochastic ascent b <- b + eta * (data mean - model minibatch mean)."""
    steps = bias_steps(config, data.count) if steps is None else steps
    if config.eta == 0 or steps == 0:
        return mix
    data_mean = data.as_float().mean(axis=0)
    b = mix.bias.copy()
    for _ in range(steps):
        b = b + config.eta * (data_mean - sampler(mix))
        mix = mix.with_bias(b)
    return mix


def expected_softplus(mix, v):
    """E_q[softplus(w.v)] for each row of v."""
    if mix.n_atoms == 0:
        return np.zeros(np.atleast_2d(v).shape[0])
    return softplus(np.atleast_2d(v) @ mix.weights.T) @ mix.q


def grad_alpha(mix, data, model_samples=None):
    """dL/dalpha = mean_n E_q[sp(w.v_n)] - E_p E_q[sp(w.v)].

    The model expectation is exact (enumeration) unless samples are supplied.
    """
    e_data = expected_softplus(mix, data.as_float())
    if model_samples is None:
        vs, ps = states(mix.visible_dim), visible_distribution(mix)
    else:
        vs, ps = _rows(model_samples)
    # both expectations are taken relative to a common shift, which keeps
    # equal terms cancelling exactly
    shift = e_data[0]
    pos = (e_data - shift).mean()
    neg = _mean_rows(expected_softplus(mix, vs) - shift, ps)
    return float(pos - neg)


def penalized_loglik(mix, data, lam, log_z):
    """mean log p(v_n) - (lam/2) E_q |w|^2, given log Z."""
    ull = float(np.mean(unnormalized_log_prob(mix, data.as_float())))
    penalty = 0.5 * lam * float(mix.q @ np.sum(mix.weights**2, axis=1)) if mix.n_atoms else 0.0
    return ull - log_z - penalty


# -- training loop -------------------------------------------------------------

class _ModelSampler:
    """FW sample source: persistent (default) or fresh chains, Gibbs or MH."""

    def __init__(self, dim, config, stream):
        self.config = config
        self.stream = stream
        self.dim = dim
        self.state = None
        self.rounds = 0

    def draw(self, mix):
        cfg = self.config
        if cfg.negative_phase == "exact":
            return (states(self.dim), visible_distribution(mix))
        if self.state is None or not cfg.persistent:
            self.state = init_chains(self.dim, cfg.n_chains, self.stream.split(self.rounds), mix.bias)
        self.rounds += 1
        model = to_standard_rbm(mix) if mix.is_standard() else mix
        buf, self.state = sample_chains(model, self.state, cfg.samples_per_iter, cfg.burn_in, cfg.thinning)
        return buf


def _ull(mix, data):
    return float(np.mean(unnormalized_log_prob(mix, data.as_float())))


def fw_train(data, validation, config, init=None, callback=None):
    """Run Frank-Wolfe for t = t0 .. max_units and return (selected mixture, report).

    From scratch the model starts as a single random atom with alpha = 1 and
    b = 0; the first inserted atom replaces it (step size 1).  A standard
    ``init`` with h atoms is extended starting at t = h + 1 with its atoms left
    untouched.  The returned mixture is the one selected by gap-based early
    stopping (the final model when stopping never triggers).
    """
    require_nonempty(data, "training data")
    require_nonempty(validation, "validation data")
    if data.visible_dim != validation.visible_dim:
        raise DimensionError("training and validation data have different visible_dim")
    dim = data.visible_dim
    stream = as_stream(config.seed)

    if init is None:
        w0 = stream.split(1).generator().normal(0.0, config.init_scale, dim)
        mix = WeightAtomMix.single_atom(w0, np.zeros(dim))
        t0, replace_first = 1, True
    else:
        if init.visible_dim != dim:
            raise DimensionError(f"init model has visible_dim {init.visible_dim}, data has {dim}")
        if not init.is_standard():
            raise ValueError("warm start requires a standard (unit-mass, alpha = atom count) model")
        mix = init
        t0, replace_first = init.n_atoms + 1, False

    sampler = _ModelSampler(dim, config, stream.split(2))
    if config.negative_phase == "exact":
        bias_sampler = exact_negative_phase
    else:
        bias_sampler = PersistentSampler(dim, config.minibatch, stream.split(3), mix.bias)
    stopper = GapEarlyStopping(config.early_stop_patience, config.gap_tolerance)
    report = TrainReport(FW_COLUMNS)
    snapshots = {}
    n_bias = bias_steps(config, data.count)
    start = time.perf_counter()

    for t in range(t0, config.max_units + 1):
        model_samples = sampler.draw(mix)
        inner = solve_inner(data, model_samples, config.lam, config, seed=stream.split(4, t))
        if not inner.converged:
            report.flags.append(f"t={t}: inner solve stopped at |grad|={inner.grad_norm:.3g}")
        if replace_first and t == 1:
            mix = WeightAtomMix.single_atom(inner.w, mix.bias)
        else:
            mix = mix.add_atom(inner.w, 1.0, alpha=float(t))
        if config.alpha_mode == "gradient":
            mix = _alpha_steps(mix, data, config, sampler)
        mix = update_bias(mix, data, config, bias_sampler, n_bias)

        train_ull, valid_ull = _ull(mix, data), _ull(mix, validation)
        report.append(t=t, inner_obj=inner.value, inner_grad_norm=inner.grad_norm,
                      w_norm=float(np.linalg.norm(inner.w)), train_ull=train_ull,
                      valid_ull=valid_ull, gap=train_ull - valid_ull,
                      seconds=time.perf_counter() - start)
        if callback is not None:
            callback(t, mix, report)
        if (t - t0 + 1) % config.eval_every == 0 or t == config.max_units:
            snapshots[t] = mix
            if stopper.update(t, train_ull - valid_ull):
                report.stopped_early = True
                break

    if not snapshots:
        report.selected = mix.n_atoms
        return mix, report
    report.selected = stopper.selected
    return snapshots[stopper.selected], report


def _alpha_steps(mix, data, config, sampler):
    for _ in range(config.alpha_steps):
        g = grad_alpha(mix, data, sampler.draw(mix))
        mix = mix.with_alpha(max(mix.alpha + config.alpha_lr * g, 1e-3))
    return mix


def proposal_for(mix):
    return to_standard_rbm(mix) if mix.is_standard() else fractional_proposal_rbm(mix)
