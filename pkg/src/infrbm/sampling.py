"""Block Gibbs and Metropolis-Hastings kernels over batches of chains.

A :class:`ChainState` carries C chains at once (``v`` has shape (C, |v|)).
Kernels are pure: the randomness of a step is drawn from the state's
counter-based stream at position ``steps_taken``, so the same state always
produces the same successor.
"""

import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from .data import pack_rows, unpack_rows
from .errors import DimensionError, FormatError
from .model import RbmModel, fractional_proposal_rbm, model_digest, unnormalized_log_prob
from .numerics import sigmoid
from .rng import Stream, as_stream

FSMP_MAGIC = b"FSMP"


@dataclass(frozen=True, eq=False)
class ChainState:
    v: np.ndarray
    stream: Stream
    h: np.ndarray = None
    steps_taken: int = 0
    accepted: int = 0

    @property
    def n_chains(self):
        return self.v.shape[0]

    @property
    def visible_dim(self):
        return self.v.shape[1]


def init_chains(dim, n_chains, seed, bias=None):
    """C chains with v ~ Bernoulli(sigmoid(bias)) (uniform when bias is None)."""
    stream = as_stream(seed)
    p = np.full(dim, 0.5) if bias is None else sigmoid(np.asarray(bias, dtype=np.float64))
    u = stream.split(0xC0DE).generator().random((n_chains, dim))
    return ChainState((u < p).astype(np.float64), stream)


def chains_from(v, seed):
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    return ChainState(v.copy(), as_stream(seed))


def _gibbs(model, v, g):
    ph = sigmoid(v @ model.weights)
    h = (g.random(ph.shape) < ph).astype(np.float64)
    pv = sigmoid(h @ model.weights.T + model.bias)
    v = (g.random(pv.shape) < pv).astype(np.float64)
    return h, v


def gibbs_step(model, state):
    """One full h-then-v block update of every chain."""
    if state.visible_dim != model.visible_dim:
        raise DimensionError(f"chain dimension {state.visible_dim} != model visible_dim {model.visible_dim}")
    g = state.stream.generator(state.steps_taken)
    h, v = _gibbs(model, state.v, g)
    return replace(state, v=v, h=h, steps_taken=state.steps_taken + 1)


def mh_log_acceptance(mix, proposal, v, v_new):
    """log A(v -> v') = [log p(v') - log p(v)] - [log p~(v') - log p~(v)]."""
    return (unnormalized_log_prob(mix, v_new) - unnormalized_log_prob(mix, v)) - (
        unnormalized_log_prob(proposal, v_new) - unnormalized_log_prob(proposal, v)
    )


def mh_fractional_step(mix, state, proposal=None):
    """Gibbs proposal in the approximating standard RBM, MH-corrected to the fractional target.

    Partition functions of both models cancel in the acceptance ratio.
    ``proposal`` may be passed to avoid rebuilding it every step.
    """
    if state.visible_dim != mix.visible_dim:
        raise DimensionError(f"chain dimension {state.visible_dim} != model visible_dim {mix.visible_dim}")
    if proposal is None:
        proposal = fractional_proposal_rbm(mix)
    g = state.stream.generator(state.steps_taken)
    _, v_new = _gibbs(proposal, state.v, g)
    log_a = mh_log_acceptance(mix, proposal, state.v, v_new)
    accept = np.log(g.random(state.n_chains)) < log_a
    v = np.where(accept[:, None], v_new, state.v)
    return replace(state, v=v, h=None, steps_taken=state.steps_taken + 1,
                   accepted=state.accepted + int(accept.sum()))


@dataclass(frozen=True, eq=False)
class SampleBuffer:
    samples: np.ndarray
    source_model_hash: int
    burn_in: int
    thinning: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.uint8)
        if s.ndim != 2 or s.shape[0] < 1:
            raise ValueError("a sample buffer needs at least one sample row")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def count(self):
        return self.samples.shape[0]

    def as_float(self):
        return self.samples.astype(np.float64)

    def check_source(self, model):
        if model_digest(model) != self.source_model_hash:
            raise ValueError("sample buffer is stale: it was drawn from a different model")

    def to_bytes(self):

        head = FSMP_MAGIC + struct.pack("<IIQ", self.count, self.samples.shape[1], self.source_model_hash)
        return head + pack_rows(self.samples).tobytes()

    @classmethod
    def from_bytes(cls, buf, burn_in=0, thinning=1):

        if len(buf) < 20 or buf[:4] != FSMP_MAGIC:
            raise FormatError("not an FSMP sample buffer", 0)
        n, dim, digest = struct.unpack_from("<IIQ", buf, 4)
        row = (dim + 7) // 8
        if len(buf) != 20 + n * row:
            raise FormatError(f"FSMP payload is {len(buf)} bytes, expected {20 + n * row}", len(buf))
        packed = np.frombuffer(buf, np.uint8, n * row, 20).reshape(n, row)
        return cls(unpack_rows(packed, dim), digest, burn_in, thinning)


def sample_chains(model, state, n_samples, burn_in=0, thinning=1, kernel=None):
    """Advance ``state``; collect ``n_samples`` visible rows interleaved round-robin over chains.

    Returns ``(SampleBuffer, final_state)`` so callers can keep chains persistent.
    ``kernel`` defaults to block Gibbs for an :class:`RbmModel` and to the
    MH-corrected sampler for a weight-atom mixture.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if thinning < 1 or burn_in < 0:
        raise ValueError("thinning must be >= 1 and burn_in >= 0")
    if kernel is None:
        if isinstance(model, RbmModel):
            kernel = gibbs_step
        else:
            proposal = fractional_proposal_rbm(model)
            kernel = lambda m, s: mh_fractional_step(m, s, proposal)
    for _ in range(burn_in):
        state = kernel(model, state)
    rounds = math.ceil(n_samples / state.n_chains)
    rows = []
    for _ in range(rounds):
        for _ in range(thinning):
            state = kernel(model, state)
        rows.append(state.v)
    samples = np.stack(rows, axis=0).reshape(-1, state.visible_dim)[:n_samples]
    return SampleBuffer(samples, model_digest(model), burn_in, thinning), state


def run_chain(model, n_samples, burn_in=0, thinning=1, seed=0, n_chains=1):
    """Sample from fresh chains started from Bernoulli(sigmoid(b))."""
    state = init_chains(model.visible_dim, n_chains, seed, model.bias)
    buf, _ = sample_chains(model, state, n_samples, burn_in, thinning)
    return buf
