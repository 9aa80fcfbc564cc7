"""Model containers: weight-atom mixtures (infinite/fractional RBMs) and dense RBMs.

A :class:`WeightAtomMix` stores ``alpha * q(w)`` as unnormalized atom masses
``c_i`` so that the unnormalized log-probability of a visible vector is::

    sum_i c_i * softplus(w_i . v) + b . v

With every ``c_i == 1`` and ``alpha`` equal to the atom count this is exactly
the marginal of a standard binary RBM whose hidden units carry the weights
``w_i`` (no hidden biases).
"""

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError, NotStandardError
from .numerics import sigmoid, softplus

FRBM_MAGIC = b"FRBM"
FRBM_VERSION = 1


def _frozen(a, ndim):
    a = np.array(a, dtype=np.float64, copy=True)
    if a.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class WeightAtomMix:
    """Finite atom mixture ``{(w_i, c_i)}`` with temperature ``alpha`` and visible bias.

    ``weights`` has shape (K, D): one row per atom.  The masses are the
    unnormalized products ``alpha * q(w_i)``; they alone define the density,
    ``alpha`` is carried as the temperature label.
    """

    weights: np.ndarray
    masses: np.ndarray
    alpha: float
    bias: np.ndarray

    def __post_init__(self):
        bias = _frozen(self.bias, 1)
        w = np.asarray(self.weights, dtype=np.float64)
        if w.size == 0:
            w = w.reshape(0, bias.shape[0])
        w = _frozen(w, 2)
        c = _frozen(np.asarray(self.masses, dtype=np.float64).reshape(-1), 1)
        if w.shape[1] != bias.shape[0]:
            raise DimensionError(f"atoms have length {w.shape[1]}, bias has length {bias.shape[0]}")
        if c.shape[0] != w.shape[0]:
            raise DimensionError(f"{w.shape[0]} atoms but {c.shape[0]} masses")
        if not np.all(np.isfinite(w)) or not np.all(np.isfinite(bias)) or not np.all(np.isfinite(c)):
            raise ValueError("model parameters must be finite")
        if np.any(c <= 0):
            raise ValueError("atom masses must be positive")
        alpha = float(self.alpha)
        # an atom-free model is the independent-bits model; only it may carry alpha = 0
        if not (alpha > 0 or (alpha == 0 and w.shape[0] == 0)) or not math.isfinite(alpha):
            raise ValueError(f"alpha must be positive, got {alpha}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "masses", c)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "bias", bias)

    @property
    def visible_dim(self):
        return self.bias.shape[0]

    @property
    def n_atoms(self):
        return self.weights.shape[0]

    @property
    def atoms(self):
        return [(self.weights[i], float(self.masses[i])) for i in range(self.n_atoms)]

    @property
    def q(self):
        """Normalized atom probabilities c_i / sum_j c_j."""
        if self.n_atoms == 0:
            return self.masses.copy()
        return self.masses / self.masses.sum()

    def is_standard(self):
        return bool(np.all(self.masses == 1.0)) and self.alpha == float(self.n_atoms)

    def with_bias(self, bias):
        return WeightAtomMix(self.weights, self.masses, self.alpha, bias)

    def with_alpha(self, alpha):
        """Same q(w), new temperature: masses become alpha * q."""
        return WeightAtomMix(self.weights, float(alpha) * self.q, alpha, self.bias)

    def add_atom(self, w, mass=1.0, alpha=None):
        w = np.asarray(w, dtype=np.float64).reshape(1, -1)
        weights = np.vstack([self.weights, w])
        masses = np.append(self.masses, mass)
        return WeightAtomMix(weights, masses, self.n_atoms + 1 if alpha is None else alpha, self.bias)

    @classmethod
    def single_atom(cls, w, bias=None):
        w = np.asarray(w, dtype=np.float64).reshape(1, -1)
        bias = np.zeros(w.shape[1]) if bias is None else bias
        return cls(w, [1.0], 1.0, bias)

    @classmethod
    def empty(cls, bias):
        bias = np.asarray(bias, dtype=np.float64)
        return cls(np.zeros((0, bias.shape[0])), [], 0.0, bias)


@dataclass(frozen=True, eq=False)
class RbmModel:
    """Dense standard RBM: ``weights`` is |v| x |h| (column i = hidden unit i)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        bias = _frozen(self.bias, 1)
        w = np.asarray(self.weights, dtype=np.float64)
        if w.size == 0:
            w = w.reshape(bias.shape[0], 0)
        w = _frozen(w, 2)
        if w.shape[0] != bias.shape[0]:
            raise DimensionError(f"W has {w.shape[0]} rows, bias has length {bias.shape[0]}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", bias)

    @property
    def visible_dim(self):
        return self.weights.shape[0]

    @property
    def hidden_dim(self):
        return self.weights.shape[1]


def _check_visible(v, dim):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim not in (1, 2) or v.shape[-1] != dim:
        raise DimensionError(f"visible vector(s) of shape {v.shape} do not match visible_dim={dim}")
    return v


def unnormalized_log_prob(model, v):
    """sum_i c_i softplus(w_i . v) + b . v for one vector or a batch of rows.

    Accepts a :class:`WeightAtomMix` or an :class:`RbmModel` (unit masses).
    Atoms are accumulated in ascending index order, bias term last.
    """
    if isinstance(model, RbmModel):
        weights, masses = model.weights.T, None
    else:
        weights, masses = model.weights, model.masses
    v = _check_visible(v, model.bias.shape[0])
    pre = v @ weights.T
    sp = softplus(pre)
    acc = np.zeros(pre.shape[:-1])
    for i in range(weights.shape[0]):
        acc = acc + (sp[..., i] if masses is None else masses[i] * sp[..., i])
    acc = acc + v @ model.bias
    return float(acc) if np.ndim(acc) == 0 else acc


def free_energy(model, v):
    """Negative marginal free energy of a dense RBM (same as unit-mass log-prob)."""
    return unnormalized_log_prob(model, v)


def _rowwise(x, m):
    # non-BLAS contraction: each row's result is independent of batch size
    rows = np.einsum("nd,dh->nh", np.atleast_2d(x), m, optimize=False)
    return rows[0] if x.ndim == 1 else rows


def hidden_conditional(model, v):
    """p(h_i = 1 | v) = sigmoid(w_i . v), for a vector or batch of rows.

    Row results are bit-identical whether computed singly or in a batch.
    """
    v = _check_visible(v, model.visible_dim)
    return sigmoid(_rowwise(v, model.weights))


def visible_conditional(model, h):
    """p(v_j = 1 | h) = sigmoid(W_j. h + b_j)."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim not in (1, 2) or h.shape[-1] != model.hidden_dim:
        raise DimensionError(f"hidden vector(s) of shape {h.shape} do not match hidden_dim={model.hidden_dim}")
    return sigmoid(_rowwise(h, model.weights.T) + model.bias)


def to_standard_rbm(mix):
    if not mix.is_standard():
        raise NotStandardError(
            f"mixture is fractional (alpha={mix.alpha}, masses={mix.masses.tolist()}); "
            "use fractional_proposal_rbm for an approximating RBM"
        )
    return RbmModel(mix.weights.T, mix.bias)


def from_standard_rbm(model):
    h = model.hidden_dim
    return WeightAtomMix(model.weights.T, np.ones(h), float(h), model.bias)


def fractional_proposal_rbm(mix):
    """Standard RBM approximating a fractional mixture.

    Atom (w, c) becomes floor(c) copies of w plus one column frac(c) * w when the
    fractional part is nonzero, i.e. softplus(c w.v) is substituted only for the
    fractional remainder of each mass.
    """
    cols = []
    for w, c in zip(mix.weights, mix.masses):
        whole = int(math.floor(c))
        frac = c - whole
        cols.extend([w] * whole)
        if frac > 0:
            cols.append(frac * w)
    weights = np.array(cols).T if cols else np.zeros((mix.visible_dim, 0))
    return RbmModel(weights, mix.bias)


def as_rbm(model):
    if isinstance(model, RbmModel):
        return model
    return to_standard_rbm(model)


# -- serialization ---------------------------------------------------------

def to_bytes(mix):
    d, k = mix.visible_dim, mix.n_atoms
    parts = [FRBM_MAGIC, struct.pack("<III", FRBM_VERSION, d, k), mix.bias.astype("<f8").tobytes()]
    for w, c in zip(mix.weights, mix.masses):
        parts.append(struct.pack("<d", c))
        parts.append(w.astype("<f8").tobytes())
    parts.append(struct.pack("<d", mix.alpha))
    return b"".join(parts)


def from_bytes(buf):
    if len(buf) < 16:
        raise FormatError("FRBM header truncated", len(buf))
    if buf[:4] != FRBM_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {FRBM_MAGIC!r}", 0)
    version, d, k = struct.unpack_from("<III", buf, 4)
    if version != FRBM_VERSION:
        raise FormatError(f"unsupported FRBM version {version}", 4)
    need = 16 + 8 * d + k * 8 * (d + 1) + 8
    if len(buf) != need:
        raise FormatError(f"FRBM payload is {len(buf)} bytes, expected {need}", min(len(buf), need))
    off = 16
    bias = np.frombuffer(buf, "<f8", d, off).astype(np.float64)
    off += 8 * d
    rec = np.frombuffer(buf, "<f8", k * (d + 1), off).reshape(k, d + 1).astype(np.float64)
    off += 8 * k * (d + 1)
    (alpha,) = struct.unpack_from("<d", buf, off)
    return WeightAtomMix(rec[:, 1:].reshape(k, d), rec[:, 0], alpha, bias)


def save(mix, path):
    if isinstance(mix, RbmModel):
        mix = from_standard_rbm(mix)
    with open(path, "wb") as f:
        f.write(to_bytes(mix))


def load(path):
    with open(path, "rb") as f:
        return from_bytes(f.read())


def to_text(mix):
    """Lossless text form: hex floats, one atom per line."""
    hexs = lambda xs: " ".join(float(x).hex() for x in xs)
    lines = [
        f"frbm-text {FRBM_VERSION} {mix.visible_dim} {mix.n_atoms}",
        f"alpha {mix.alpha.hex()}",
        f"bias {hexs(mix.bias)}".rstrip(),
    ]
    lines += [f"atom {float(c).hex()} {hexs(w)}".rstrip() for w, c in zip(mix.weights, mix.masses)]
    return "\n".join(lines) + "\n"


def from_text(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    try:
        tag, version, d, k = lines[0].split()
        if tag != "frbm-text" or int(version) != FRBM_VERSION:
            raise FormatError(f"unrecognized header {lines[0]!r}", 1)
        d, k = int(d), int(k)
        alpha = float.fromhex(lines[1].split()[1])
        bias = [float.fromhex(x) for x in lines[2].split()[1:]]
        masses, weights = [], []
        for ln in lines[3:]:
            fields = ln.split()
            if fields[0] != "atom":
                raise FormatError(f"expected atom line, got {fields[0]!r}")
            masses.append(float.fromhex(fields[1]))
            weights.append([float.fromhex(x) for x in fields[2:]])
    except (IndexError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed FRBM text: {exc}") from exc
    if len(masses) != k or len(bias) != d:
        raise FormatError("FRBM text counts disagree with header", 1)
    return WeightAtomMix(np.array(weights).reshape(k, d), masses, alpha, bias)


def model_digest(model):
    """64-bit content digest (first 8 bytes of SHA-256 over the FRBM encoding)."""
    mix = from_standard_rbm(model) if isinstance(model, RbmModel) else model
    return int.from_bytes(hashlib.sha256(to_bytes(mix)).digest()[:8], "little")
