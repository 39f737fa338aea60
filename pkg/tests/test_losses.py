import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spikegrad import losses as LS
from spikegrad.analysis import finite_diff_loss_grad
from spikegrad.errors import ConfigError
from spikegrad.grad import ParamGrads
from spikegrad.neuron import ForwardTrace


def train(T, n, spikes):
    s = np.zeros((T, n))
    for t, o in spikes:
        s[t, o] = 1
    return s


binary = st.integers(5, 30).flatmap(
    lambda T: arrays(np.float64, (T, 3), elements=st.sampled_from([0.0, 1.0])))


# -- count --------------------------------------------------------------------------------

def test_count_example():
    g = LS.count_loss(train(100, 1, [(3, 0), (50, 0), (90, 0)]), LS.Count(np.array([1.0])))
    assert g.loss_value == pytest.approx(0.04)
    assert np.allclose(g.dL_dS, 0.04)
    assert not g.dL_dthat.any()


def test_count_exact_hit_and_empty():
    g = LS.count_loss(train(10, 2, [(1, 0), (4, 0), (2, 1)]), LS.Count(np.array([2.0, 1.0])))
    assert g.loss_value == 0 and not g.dL_dS.any()
    g = LS.count_loss(np.zeros((10, 2)), LS.Count(np.zeros(2)))
    assert g.loss_value == 0


def test_count_rejects_negative_targets():
    with pytest.raises(ConfigError):
        LS.Count(np.array([-1.0]))


def test_count_batched_sums():
    s = np.zeros((10, 2, 1))
    s[0, 0, 0] = 1
    g = LS.count_loss(s, LS.Count(np.array([[0.0], [0.0]])))
    assert g.loss_value == pytest.approx(0.1)
    assert g.dL_dS[:, 1].sum() == 0


# -- spike train ----------------------------------------------------------------------------

def test_spike_train_empty_output_geometric():
    T, t0, k = 60, 17, 0.95
    g = LS.spike_train_loss(np.zeros((T, 1)), LS.SpikeTrain(train(T, 1, [(t0, 0)]), k))
    assert g.loss_value == pytest.approx(sum(k ** (2 * (t - t0)) for t in range(t0, T)), rel=1e-12)
    # brute force convolution
    conv = [sum(k ** (t - u) for u in [t0] if u <= t) for t in range(T)]
    assert g.loss_value == pytest.approx(sum(c * c for c in conv), rel=1e-12)


def test_spike_train_match_is_zero():
    s = train(30, 2, [(4, 0), (9, 1), (20, 1)])
    g = LS.spike_train_loss(s, LS.SpikeTrain(s.copy(), 0.9))
    assert g.loss_value == 0 and not g.dL_dS.any() and not g.dL_dthat.any()


def test_spike_train_timing_seed_only_at_spikes():
    s = train(30, 1, [(4, 0), (12, 0)])
    g = LS.spike_train_loss(s, LS.SpikeTrain(train(30, 1, [(8, 0)]), 0.9))
    assert set(np.flatnonzero(g.dL_dthat[:, 0])) <= {4, 12}
    # the early spike should move later, the late one earlier
    assert g.dL_dthat[4, 0] < 0 < g.dL_dthat[12, 0]


def test_spike_train_shape_mismatch():
    with pytest.raises(ConfigError):
        LS.spike_train_loss(np.zeros((10, 1)), LS.SpikeTrain(np.zeros((11, 1))))


@pytest.mark.parametrize("k", [0.0, 1.0, -0.5])
def test_kappa_range(k):
    with pytest.raises(ConfigError):
        LS.SpikeTrain(np.zeros((3, 1)), k)


def test_kernel_star_is_central_difference():
    k = LS.exp_kernel(10, 0.9)
    ks = LS.exp_kernel_star(10, 0.9)
    assert ks[10 - 1] == pytest.approx(0.5)  # lag -1: (k[0] - 0) / 2
    assert ks[10] == pytest.approx(0.45)
    assert ks[10 + 3] == pytest.approx(0.5 * (0.9 ** 4 - 0.9 ** 2))
    assert k[10 - 1] == 0 and k[10] == 1


@given(binary, binary, st.floats(0.05, 0.99))
def test_spike_train_nonnegative_zero_iff_equal(a, b, k):
    T = min(len(a), len(b))
    a, b = a[:T], b[:T]
    v = LS.spike_train_loss(a, LS.SpikeTrain(b, k)).loss_value
    assert v >= 0
    assert (v == 0) == np.array_equal(a, b)


@given(binary, binary, st.floats(0.05, 0.99))
def test_spike_train_seed_is_exact_gradient_of_relaxation(a, b, k):
    # The loss is quadratic in S, so a central difference is exact up to rounding.
    T = min(len(a), len(b))
    a, b = a[:T], b[:T]
    spec = LS.SpikeTrain(b, k)
    g = LS.spike_train_loss(a, spec)
    t, o = T // 2, 1
    h = 1e-3
    up, dn = a.copy(), a.copy()
    up[t, o] += h
    dn[t, o] -= h
    d = lambda s: np.sum(LS.filtered_difference(s, b, k) ** 2)
    assert (d(up) - d(dn)) / (2 * h) == pytest.approx(g.dL_dS[t, o], abs=1e-8)


# -- latency ---------------------------------------------------------------------------------

def test_latency_symmetric():
    s = train(20, 2, [(5, 0), (5, 1)])
    g = LS.latency_loss(s, LS.Latency(np.array(0), 1.0))
    assert g.loss_value == pytest.approx(np.log(2))
    assert g.dL_dthat[5].tolist() == pytest.approx([0.5, -0.5])
    assert not g.dL_dS.any()


def test_latency_three_outputs():
    s = train(30, 3, [(10, 0), (20, 1), (20, 2), (25, 0)])
    g = LS.latency_loss(s, LS.Latency(np.array(0), 0.1))
    p = LS.softmax_neg(np.array([10.0, 20.0, 20.0]), 0.1)
    assert p == pytest.approx([0.57612, 0.21194, 0.21194], abs=1e-5)
    assert g.loss_value == pytest.approx(0.55144, abs=1e-5)
    assert g.dL_dthat[10, 0] == pytest.approx(-0.1 * (p[0] - 1))
    assert g.dL_dthat[25, 0] == 0  # only the first spike carries the seed


def test_latency_correct_far_earlier():
    s = train(2000, 2, [(0, 0), (1999, 1)])
    assert LS.latency_loss(s, LS.Latency(np.array(0), 1.0)).loss_value < 1e-12


def test_latency_silent_neuron_uses_horizon():
    s = train(20, 2, [(5, 0)])
    g = LS.latency_loss(s, LS.Latency(np.array(1), 1.0))
    p = LS.softmax_neg(np.array([5.0, 20.0]), 1.0)
    assert g.loss_value == pytest.approx(-np.log(p[1]))
    assert g.silent_outputs == 1
    assert g.dL_dthat[:, 1].sum() == 0


def test_softmax_extreme_inputs_stable():
    p = LS.softmax_neg(np.array([0.0, 1e6]), 10.0)
    assert np.all(np.isfinite(p)) and p[0] == 1.0


# -- auxiliary terms ------------------------------------------------------------------------------

def test_min_count():
    spec = LS.MinCount(np.array(1))
    g = LS.min_count_variant(train(10, 2, [(3, 1), (4, 1)]), spec)
    assert g.loss_value == 0 and not g.dL_dS.any()
    g = LS.min_count_variant(train(10, 2, [(3, 0)]), spec)
    assert g.loss_value == 1
    assert np.allclose(g.dL_dS[:, 1], -2.0)
    assert not g.dL_dS[:, 0].any()
    scaled = LS.min_count_variant(train(10, 2, [(3, 0)]), LS.MinCount(np.array(1), time_scaled=True))
    assert np.allclose(scaled.dL_dS[:, 1], -0.2)


@given(st.floats(0.0, 0.9))
def test_min_count_seed_is_derivative(c):
    # relax the desired neuron's count to a real c < 1; every S[t] enters c with unit weight
    h = 1e-4
    f = lambda c: (min(c, 1.0) - 1.0) ** 2
    s = np.zeros((10, 2))
    s[0, 1] = c
    g = LS.min_count_variant(s, LS.MinCount(np.array(1)))
    assert g.dL_dS[5, 1] == pytest.approx((f(c + h) - f(c - h)) / (2 * h), abs=1e-6)


def _trace(spikes):
    return ForwardTrace(spikes, [None] * len(spikes), [None] * len(spikes))


def test_no_spike_penalty():
    T = 5
    hidden = np.zeros((T, 3))
    hidden[1, [0, 2]] = 1
    out = np.zeros((T, 2))
    out[2, 0] = 1
    grads = ParamGrads([np.zeros((4, 3)), np.zeros((3, 2))], [np.zeros(3), np.zeros(2)])
    adj = LS.no_spike_penalty(_trace([np.zeros((T, 4)), hidden, out]), grads, LS.NoSpikePenalty(1.0))
    assert adj.dW[0][:, 1].tolist() == [-1.0] * 4
    assert not adj.dW[0][:, [0, 2]].any()
    assert adj.dW[1][:, 1].tolist() == [-1.0] * 3
    assert not adj.dW[1][:, 0].any()
    assert not grads.dW[0].any()  # input untouched


def test_no_spike_penalty_all_active():
    T = 4
    s = np.ones((T, 2))
    grads = ParamGrads([np.ones((2, 2))], [np.zeros(2)])
    adj = LS.no_spike_penalty(_trace([s, s]), grads, LS.NoSpikePenalty(1.0))
    assert np.array_equal(adj.dW[0], grads.dW[0])


# -- compatibility and finite differences -----------------------------------------------------

@given(binary)
def test_compatibility_rows(s):
    c = LS.count_loss(s, LS.Count(np.ones(3)))
    assert not c.dL_dthat.any()
    lat = LS.latency_loss(s, LS.Latency(np.array(2), 0.5))
    assert not lat.dL_dS.any()


def test_compute_loss_dispatch():
    s = np.zeros((4, 2))
    assert LS.compute_loss(s, LS.Count(np.zeros(2))).loss_value == 0
    with pytest.raises(ConfigError):
        LS.compute_loss(s, LS.NoSpikePenalty())


@pytest.mark.parametrize("kind", ["count", "spike_train", "latency"])
@given(seed=st.integers(0, 10 ** 6))
def test_seed_matches_finite_difference(kind, seed):
    assert finite_diff_loss_grad(kind, seed, h=1e-4) < 1e-6
