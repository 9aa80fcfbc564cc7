import sys

import numpy as np
import pytest

from infrbm.data import BinaryDataset
from infrbm.model import RbmModel, WeightAtomMix


def random_rbm(rng, d, h, scale=1.0):
    return RbmModel(rng.normal(0, scale, (d, h)), rng.normal(0, scale, d))


def random_mix(rng, d, k, scale=1.0, masses=None):
    masses = rng.uniform(0.2, 2.0, k) if masses is None else masses
    return WeightAtomMix(rng.normal(0, scale, (k, d)), masses, float(np.sum(masses)), rng.normal(0, scale, d))


def random_data(rng, n, d, p=0.5):
    return BinaryDataset((rng.random((n, d)) < p).astype(np.uint8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS, key=str):
        terminalreporter.write_line(mod.RESULTS[n])
