"""Ground-truth 6-visible / 3-hidden RBM task with exact sampling.

Visible units come in three pairs; each hidden unit ties two pairs with
opposite signs, so the pairs are strongly coupled and one unit cannot explain
the data but three can.  Labels encode the first
two hidden bits of the joint sample (4 classes).
"""

import os

import numpy as np

from .data import BinaryDataset, write_idx
from .exact import states
from .model import RbmModel
from .numerics import logsumexp
from .rng import as_stream

GROUND_TRUTH_WEIGHTS = np.array([
    [3.0, -3.0, 0.0],
    [3.0, -3.0, 0.0],
    [-3.0, 0.0, 3.0],
    [-3.0, 0.0, 3.0],
    [0.0, 3.0, -3.0],
    [0.0, 3.0, -3.0],
])
# centres every conditional so visible marginals are exactly 1/2
GROUND_TRUTH_BIAS = -0.5 * GROUND_TRUTH_WEIGHTS.sum(axis=1)


def ground_truth_rbm():
    return RbmModel(GROUND_TRUTH_WEIGHTS, GROUND_TRUTH_BIAS)


def sample_joint(model, n, rng):
    """Exact i.i.d. (v, h) pairs by enumerating the joint state space."""
    d, k = model.visible_dim, model.hidden_dim
    joint = states(d + k)
    v, h = joint[:, :d], joint[:, d:]
    logp = np.einsum("nd,dk,nk->n", v, model.weights, h) + v @ model.bias
    p = np.exp(logp - logsumexp(logp))
    idx = rng.choice(p.shape[0], size=n, p=p / p.sum())
    return v[idx].astype(np.uint8), h[idx].astype(np.uint8)


def labels_from_hidden(h):
    return (h[:, 0] + 2 * h[:, 1]).astype(np.int64)


def make_dataset(n, seed, model=None):
    model = ground_truth_rbm() if model is None else model
    v, h = sample_joint(model, n, as_stream(seed).split(0x5EED).generator())
    return BinaryDataset(v, labels_from_hidden(h), num_classes=4)


def make_task(seed, n=5000, n_valid=1000, n_test=5000):
    """(train, valid, test): ``n`` samples split into train/valid plus a fresh test set."""
    full = make_dataset(n, seed)
    test = make_dataset(n_test, as_stream(seed).split(0x7E57))
    return full.subset(np.arange(n_valid, n)), full.subset(np.arange(n_valid)), test


def write_idx_fixture(directory, seed=0, n=5000, n_test=5000):
    """Write the task as IDX files (2x3 images with pixels 0/255 plus labels).

    Returns a dict of paths: train_images, train_labels, test_images, test_labels.
    """
    paths = {}
    for name, ds in (("train", make_dataset(n, seed)), ("test", make_dataset(n_test, as_stream(seed).split(0x7E57)))):
        images = (ds.vectors.reshape(-1, 2, 3) * 255).astype(np.uint8)
        paths[f"{name}_images"] = os.path.join(directory, f"{name}-images.idx")
        paths[f"{name}_labels"] = os.path.join(directory, f"{name}-labels.idx")
        write_idx(paths[f"{name}_images"], images)
        write_idx(paths[f"{name}_labels"], ds.labels.astype(np.uint8))
    return paths
