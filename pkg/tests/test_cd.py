import numpy as np
import pytest

from conftest import random_data, random_rbm
from infrbm.cd import CdConfig, cd_gradient, cd_train, hyperparameter_grid, positive_phase, random_init
from infrbm.data import BinaryDataset
from infrbm.errors import DimensionError
from infrbm.exact import exact_avg_loglik, exact_loglik_gradient
from infrbm.model import RbmModel
from infrbm.numerics import sigmoid
from infrbm.sampling import chains_from, init_chains
from infrbm.synthetic import ground_truth_rbm, make_task


def test_zero_model_all_ones_batch():
    model = RbmModel(np.zeros((4, 3)), np.zeros(4))
    batch = np.ones((10_000, 4))
    dW, db, _ = cd_gradient(model, batch, chains_from(batch, 1), k=1)
    # positive phase 0.5 per entry; negative phase averages 0.25
    assert np.all(np.abs(dW - 0.25) <= 0.01)
    assert positive_phase(model, batch) == pytest.approx(np.full((4, 3), 0.5))


def test_positive_phase_is_analytic_and_bit_reproducible(rng):
    m = random_rbm(rng, 5, 3)
    batch = random_data(rng, 20, 5).as_float()
    pos = positive_phase(m, batch)
    loop = sum(np.outer(v, 1 / (1 + np.exp(-(v @ m.weights)))) for v in batch) / 20
    np.testing.assert_allclose(pos, loop, atol=1e-14)
    assert positive_phase(m, batch).tobytes() == pos.tobytes()


def test_long_chains_match_exact_gradient(rng):
    m = random_rbm(rng, 6, 3, scale=0.5)
    data = random_data(rng, 10_000, 6)
    exact_dW, exact_db = exact_loglik_gradient(m, data)
    # mean of the CD estimator over independent draws of 10^4 chains each
    draws = [cd_gradient(m, data.as_float(), chains_from(data.as_float(), s), k=200) for s in range(4)]
    dW = np.mean([d[0] for d in draws], axis=0)
    db = np.mean([d[1] for d in draws], axis=0)
    assert np.abs(dW - exact_dW).max() <= 0.01
    assert np.abs(db - exact_db).max() <= 0.01


def test_direction_agrees_with_exact_gradient():
    g = np.random.default_rng(7)
    agree = 0
    for i in range(40):
        m = random_rbm(g, 5, 3)
        data = random_data(g, 500, 5, p=g.uniform(0.2, 0.8))
        exact = np.concatenate([x.ravel() for x in exact_loglik_gradient(m, data)])
        dW, db, _ = cd_gradient(m, data.as_float(), chains_from(data.as_float(), i), k=50)
        agree += np.concatenate([dW.ravel(), db]) @ exact > 0
    assert agree >= 0.95 * 40


def test_gradient_errors(rng):
    m = random_rbm(rng, 4, 2)
    with pytest.raises(DimensionError):
        cd_gradient(m, np.ones((3, 5)), init_chains(5, 3, 0), 1)
    with pytest.raises(ValueError):
        cd_gradient(m, np.ones((0, 4)), init_chains(4, 3, 0), 1)
    with pytest.raises(ValueError):
        cd_gradient(m, np.ones((3, 4)), init_chains(4, 3, 0), 0)


def test_random_init(rng):
    data = BinaryDataset(np.array([[1, 0, 1]] * 9 + [[1, 1, 0]], np.uint8))
    m = random_init(data, 50, 0.01, seed=0)
    assert m.weights.shape == (3, 50) and abs(m.weights.std() - 0.01) < 0.003
    np.testing.assert_allclose(m.bias, [4.0, np.log(0.1 / 0.9), np.log(0.9 / 0.1)])


def small_task(seed=0):
    tr, va, _ = make_task(seed, n=600, n_valid=100, n_test=10)
    return tr, va


def test_zero_epochs_returns_init():
    tr, va = small_task()
    init = random_init(tr, 3, 0.01, 5)
    model, report = cd_train(tr, va, CdConfig(epochs=0, hidden_units=3), init=init)
    assert model is init and report.records == []
    model, _ = cd_train(tr, va, CdConfig(epochs=0, hidden_units=3, seed=5))
    np.testing.assert_array_equal(model.weights, random_init(tr, 3, 0.01, __import__("infrbm.rng").rng.as_stream(5).split(0)).weights)


def test_report_and_reproducibility():
    tr, va = small_task(1)
    cfg = CdConfig(epochs=3, hidden_units=4, minibatch=50, seed=2)
    a, ra = cd_train(tr, va, cfg)
    b, rb = cd_train(tr, va, cfg)
    np.testing.assert_array_equal(a.weights, b.weights)
    assert ra.column("epoch") == [1, 2, 3]
    assert ra.to_csv().splitlines()[0] == "epoch,train_ull,valid_ull,gap,seconds"
    for r in ra.records:
        assert r["gap"] == r["train_ull"] - r["valid_ull"]


def test_persistent_pool_changes_every_update(monkeypatch):
    import infrbm.cd as cdmod

    seen = []
    real = cdmod.cd_gradient

    def spy(model, batch, chains, k):
        out = real(model, batch, chains, k)
        seen.append((chains.n_chains, out[2].v.tobytes(), out[2].steps_taken))
        return out

    monkeypatch.setattr(cdmod, "cd_gradient", spy)
    tr, va = small_task(2)
    cd_train(tr, va, CdConfig(epochs=2, hidden_units=3, minibatch=100, persistent=True, k=1))
    assert all(n == 100 for n, _, _ in seen)
    steps = [s for _, _, s in seen]
    assert steps == list(range(1, len(seen) + 1))  # one pool, advanced once per update
    assert len({d for _, d, _ in seen}) == len(seen)


def test_learning_rate_is_applied():
    tr, va = small_task(3)
    init = random_init(tr, 3, 0.01, 1)
    slow, _ = cd_train(tr, va, CdConfig(epochs=1, hidden_units=3, learning_rate=1e-12), init=init)
    np.testing.assert_allclose(slow.weights, init.weights, atol=1e-10)


def test_restarts_pick_best_gap():
    tr, va = small_task(4)
    _, r1 = cd_train(tr, va, CdConfig(epochs=2, hidden_units=3, restarts=1))
    _, r3 = cd_train(tr, va, CdConfig(epochs=2, hidden_units=3, restarts=3))
    assert r3.records[-1]["gap"] <= r1.records[-1]["gap"]


def test_init_dimension_errors(rng):
    tr, va = small_task()
    with pytest.raises(DimensionError):
        cd_train(tr, va, CdConfig(hidden_units=2), init=random_rbm(rng, 5, 2))
    with pytest.raises(DimensionError):
        cd_train(tr, va, CdConfig(hidden_units=3), init=random_rbm(rng, 6, 2))


@pytest.mark.parametrize("bad", [dict(k=0), dict(learning_rate=0.0), dict(hidden_units=0), dict(restart_metric="x")])
def test_config_invariants(bad):
    with pytest.raises(ValueError):
        CdConfig(**bad)


def test_hyperparameter_grid():
    grid = hyperparameter_grid()
    assert len(grid) == 20
    assert {g["learning_rate"] for g in grid} == {0.05, 0.02, 0.01, 0.005}
    assert {g["minibatch"] for g in grid} == {10, 20, 50, 100, 200}


def test_synthetic_protocol_recovers_ground_truth():
    """|h| = 3, CD-10, 200 epochs: exact test log-lik within 0.2 of the generating model on >= 8/10 seeds."""
    close = 0
    for seed in range(10):
        train, valid, test = make_task(seed)
        model, _ = cd_train(train, valid, CdConfig(hidden_units=3, k=10, epochs=200, seed=seed))
        close += abs(exact_avg_loglik(model, test) - exact_avg_loglik(ground_truth_rbm(), test)) <= 0.2
    assert close >= 8
