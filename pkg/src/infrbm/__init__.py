"""Infinite restricted Boltzmann machines trained by Frank-Wolfe.

Hidden units are added one at a time as weight atoms of a mixing
distribution; contrastive-divergence baselines, exact and AIS likelihood
evaluation, and an MH sampler for fractional models are included.
"""

__version__ = "0.1.0"

from .model import RbmModel, WeightAtomMix  # noqa: E402
