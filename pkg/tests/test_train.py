import numpy as np
import pytest

from spikegrad.config import build_config
from spikegrad.errors import DivergenceError
from spikegrad.train import (
    MetricsWriter, MnistDataset, compute_grads, decide, evaluate, load_params, mean_loss, matching_instance,
    save_params, train, train_matching_trial,
)
from spikegrad.neuron import forward_rnn


def small_matching(**ov):
    base = dict(layer_sizes=(4, 6, 2), horizon_T=30, iterations=15, n_trials=2)
    base.update(ov)
    return build_config("matching_antlr", base)


def test_zero_learning_rate_keeps_params():
    exp = small_matching(learning_rate=0.0)
    p0 = matching_instance(exp, 0)[2]
    _, p1, _ = train_matching_trial(exp, 0)
    assert all(np.array_equal(a, b) for a, b in zip(p0.weights + p0.biases, p1.weights + p1.biases))


def test_target_equal_to_own_output_gives_zero_loss():
    exp = small_matching()
    x, _, p = matching_instance(exp, 1)
    own = forward_rnn(p, x, exp.network, exp.neuron).output
    losses, _, _ = train_matching_trial(exp, 1, target=own)
    assert np.all(losses == 0)


def test_matching_trials_reproducible():
    exp = small_matching()
    a, _, _ = train_matching_trial(exp, 0)
    b, _, _ = train_matching_trial(exp, 0)
    assert np.array_equal(a, b)
    c, _, _ = train_matching_trial(exp, 1)
    assert not np.array_equal(a, c)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_update_is_divergence():
    exp = small_matching(iterations=5, learning_rate=np.inf)
    with pytest.raises(DivergenceError, match="iteration 0"):
        train_matching_trial(exp, 0)


def test_decide_rules():
    T = 6
    s = np.zeros((T, 3, 3))
    s[2, 0, 1] = s[4, 0, 0] = 1            # sample 0: neuron 1 first
    s[3, 1, [0, 2]] = 1                    # sample 1: tie, lowest index wins
    pred, silent, ties = decide(s, "earliest_spike")  # sample 2 silent
    assert pred.tolist() == [1, 0, 0]
    assert silent.tolist() == [False, False, True]
    assert ties.tolist() == [False, True, False]
    s[1, 0, 0] = 1
    pred, _, ties = decide(s, "most_spike")
    assert pred[0] == 0 and ties.tolist() == [False, True, False]
    with pytest.raises(ValueError):
        decide(s, "loudest")


def test_metrics_writer(tmp_path):
    from spikegrad.train import MetricsRecord
    w = MetricsWriter(tmp_path / "sub" / "m.jsonl", deterministic=True)
    w.write(MetricsRecord("x", 1, 0, train_loss=0.5))
    assert (tmp_path / "sub" / "m.jsonl").read_text().count("\n") == 1
    assert w.records[0]["wall_time"] is None
    w2 = MetricsWriter(None, deterministic=False)
    w2.write(MetricsRecord("x", 1, 0))
    assert w2.records[0]["wall_time"] is not None


def _toy_dataset(n=40, seed=0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 3, size=n)
    images = np.zeros((n, 28, 28), dtype=np.uint8)
    for k, lab in enumerate(labels):
        images[k, 4 + 8 * lab: 10 + 8 * lab, 4:24] = 255
    return MnistDataset(images, labels, 20)


def test_dataset_training_smoke(tmp_path):
    data = _toy_dataset()
    exp = build_config("mnist_activation", dict(layer_sizes=(784, 12, 3), horizon_T=20, epoch=3, batch_size=8,
                                                deterministic=True, theta=0.2, params_path=str(tmp_path / "p.npz")))
    from spikegrad.optim import init_params
    before = mean_loss(init_params(exp.network, exp.seed, exp.init_bias_center, exp.neuron), data, exp)
    params, records = train(exp, datasets=(data, data))
    assert records[-1]["kind"] == "summary"
    assert [r["epoch"] for r in records if r["kind"] == "eval"] == [1, 2, 3]
    assert mean_loss(params, data, exp) < before
    loaded = load_params(tmp_path / "p.npz")
    assert all(np.array_equal(a, b) for a, b in zip(loaded.weights, params.weights))
    res = evaluate(params, data, exp.decision_scheme, exp, batch_size=7)
    assert len(res.predictions) == len(data)


def test_dataset_training_deterministic():
    data = _toy_dataset()
    exp = build_config("mnist_antlr", dict(layer_sizes=(784, 12, 3), horizon_T=20, epoch=1, batch_size=8,
                                           deterministic=True, log_every=1))
    _, a = train(exp, datasets=(data, data))
    _, b = train(exp, datasets=(data, data))
    assert a == b
    assert any(r["kind"] == "batch" for r in a)


def test_compute_grads_penalty_only_for_timing():
    data = _toy_dataset(8)
    x, y = data.batch(np.arange(8))
    from spikegrad.neuron import Parameters
    exp = build_config("mnist_timing", dict(layer_sizes=(784, 5, 3), horizon_T=20))
    silent = Parameters([np.zeros((784, 5)), np.zeros((5, 3))], [np.zeros(5), np.zeros(3)])
    _, _, _, g = compute_grads(silent, x, y, exp)
    assert np.all(g.dW[0] == -exp.no_spike_eta * 8)
    exp = build_config("mnist_antlr", dict(layer_sizes=(784, 5, 3), horizon_T=20))
    _, _, _, g = compute_grads(silent, x, y, exp)
    assert not g.dW[0].any()  # silent hidden layer and no penalty: nothing reaches the first layer
