import numpy as np
import pytest
from hypothesis import given, strategies as st

from spikegrad import analysis as A
from spikegrad import losses as LS
from spikegrad.errors import ConfigError
from spikegrad.grad import MethodConfig, backprop_antlr, backprop_rnn_bptt
from spikegrad.neuron import NetworkShape, NeuronConfig, Parameters, forward_rnn, forward_srm


# --- principal directions ---------------------------------------------------


def test_pca_spans_planted_plane(rng):
    basis, _ = np.linalg.qr(rng.normal(size=(30, 2)))
    hist = [basis @ rng.normal(size=2) * 3 for _ in range(25)]
    d0, d1 = A.pca_directions(hist)
    proj = basis @ (basis.T @ np.stack([d0, d1], axis=1))
    assert np.allclose(proj, np.stack([d0, d1], axis=1), atol=1e-10)


def test_pca_rejects_duplicates():
    v = np.arange(6.0)
    with pytest.raises(ConfigError, match="rank"):
        A.pca_directions([v, v, v])


def test_pca_needs_two_vectors():
    with pytest.raises(ConfigError):
        A.pca_directions([np.ones(4)])


@given(st.integers(0, 2**32 - 1), st.integers(3, 40), st.integers(3, 60))
def test_pca_orthonormal(seed, n_vec, dim):
    hist = np.random.default_rng(seed).normal(size=(n_vec, dim))
    d0, d1 = A.pca_directions(hist)
    gram = np.array([[d0 @ d0, d0 @ d1], [d1 @ d0, d1 @ d1]])
    assert np.max(np.abs(gram - np.eye(2))) < 1e-10


def test_pca_first_direction_is_dominant(rng):
    hist = rng.normal(size=(200, 5)) * np.array([10.0, 3.0, 0.1, 0.1, 0.1])
    d0, d1 = A.pca_directions(hist)
    assert abs(d0[0]) > 0.99 and abs(d1[1]) > 0.99


# --- surface reconstruction -------------------------------------------------


def _grid(n, lo=-1.0, hi=1.0):
    c = np.linspace(lo, hi, n)
    return c, np.meshgrid(c, c, indexing="ij")


def test_bowl_reconstruction():
    c, (x, y) = _grid(41)
    h = c[1] - c[0]
    z = A.reconstruct_surface(2 * x, 2 * y, (h, h), (20, 20))
    assert np.max(np.abs(z - (x**2 + y**2))) < 1e-6


def test_zero_field_gives_zero_surface():
    z = A.reconstruct_surface(np.zeros((9, 7)), np.zeros((9, 7)))
    assert np.array_equal(z, np.zeros((9, 7)))


def test_sin_cos_reconstruction():
    c, (x, y) = _grid(50, -2.0, 2.0)
    h = c[1] - c[0]
    z = A.reconstruct_surface(np.cos(x) * np.cos(y), -np.sin(x) * np.sin(y), (h, h), (25, 25))
    truth = np.sin(x) * np.cos(y)
    truth -= truth[25, 25]
    assert np.max(np.abs(z - truth)) < 1e-3


@given(st.integers(0, 2**32 - 1), st.integers(2, 15), st.integers(2, 15))
def test_discrete_exactness(seed, n0, n1):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(n0, n1))
    h0, h1 = rng.uniform(0.1, 2.0, size=2)
    e0 = np.diff(f, axis=0) / h0
    e1 = np.diff(f, axis=1) / h1
    anchor = (int(rng.integers(n0)), int(rng.integers(n1)))
    z = A.integrate_edges(e0, e1, (h0, h1), anchor)
    assert np.max(np.abs(z - (f - f[anchor]))) < 1e-10


def test_integrate_edges_rejects_mismatched_shapes():
    with pytest.raises(ConfigError):
        A.integrate_edges(np.zeros((3, 4)), np.zeros((3, 3)))


def test_edge_slopes_exact_for_cubic_derivative():
    c = np.linspace(-1.0, 2.0, 9)
    g = 1 + c - 2 * c**2 + 0.5 * c**3           # derivative of a quartic
    prim = c + 0.5 * c**2 - 2 / 3 * c**3 + 0.125 * c**4
    got = A.edge_slopes(g)
    assert np.allclose(got, np.diff(prim) / np.diff(c), atol=1e-12)


def test_anchor_is_zero(rng):
    g0, g1 = rng.normal(size=(2, 6, 8))
    z = A.reconstruct_surface(g0, g1, anchor=(2, 5))
    assert z[2, 5] == 0.0


# --- grid export --------------------------------------------------------------


def test_csv_round_trip(tmp_path, rng):
    m = rng.normal(size=(4, 3))
    c0, c1 = np.linspace(-1, 1, 4), np.array([0.1, 0.2, 1 / 3])
    A.write_grid_csv(tmp_path / "g.csv", m, c0, c1)
    back, b0, b1 = A.read_grid_csv(tmp_path / "g.csv")
    assert np.array_equal(back, m) and np.array_equal(b0, c0) and np.array_equal(b1, c1)


def _toy_grid():
    c = np.linspace(-1.0, 1.0, 5)
    x, y = np.meshgrid(c, c, indexing="ij")
    count = np.where(np.hypot(x, y) < 0.8, 4, 5)
    grad0 = {"activation": np.zeros_like(x), "timing": 2 * x}
    grad1 = {"activation": np.zeros_like(x), "timing": 2 * y}
    return A.LandscapeGrid(np.eye(3)[0], np.eye(3)[1], c, c, x**2 + y**2, count, grad0, grad1)


def test_export_landscape(tmp_path):
    grid = _toy_grid()
    files = A.export_landscape(grid, tmp_path)
    names = {f.name for f in files}
    assert {"true_loss.csv", "unchanged_mask.csv", "surface_timing.csv", "surface_activation.csv"} <= names
    mask, _, _ = A.read_grid_csv(tmp_path / "unchanged_mask.csv")
    assert np.array_equal(mask.astype(bool), grid.unchanged)
    surf, _, _ = A.read_grid_csv(tmp_path / "surface_timing.csv")
    assert surf[2, 2] == 0.0 and np.all(surf >= -1e-12)


def test_zero_fractions_on_toy_grid():
    grid = _toy_grid()
    assert grid.center == (2, 2)
    zf = A.zero_fractions(grid)
    assert zf["activation"] == 1.0
    # only the centre of the unchanged disc has a vanishing bowl gradient
    assert zf["timing"] == pytest.approx(1 / grid.unchanged.sum())


def test_landscape_scan_on_small_net(rng):
    shape = NetworkShape((3, 4, 2), 20)
    cfg = NeuronConfig(0.9, 0.8, theta=1.0)
    w = [rng.normal(0.6, 0.3, size=(3, 4)), rng.normal(0.6, 0.3, size=(4, 2))]
    params = Parameters(w, [np.zeros(4), np.zeros(2)])
    x = np.zeros((20, 3))
    x[[1, 4, 9], [0, 1, 2]] = 1
    target = forward_rnn(params, x, shape, cfg).output
    n = params.flatten().size
    d0, d1 = np.eye(n)[0], np.eye(n)[1]
    coords = np.linspace(-0.2, 0.2, 5)
    grid = A.landscape_scan(params, (d0, d1), coords, coords, x, target, shape, cfg)
    assert grid.true_loss[grid.center] == 0.0
    assert np.all(np.isfinite(grid.true_loss))
    for m in A.LANDSCAPE_METHODS:
        assert grid.grad0[m].shape == (5, 5)
        assert np.all(np.isfinite(grid.grad0[m])) and np.all(np.isfinite(grid.grad1[m]))


# --- oracles --------------------------------------------------------------------


def test_forward_equivalence_report():
    rep = A.check_forward_equivalence(12, seed=3)
    assert rep.n_instances == 12 and rep.ok
    assert rep.spike_mismatches == 0 and rep.failing_seeds == []


def test_sweep_covers_every_corner_pair():
    seen = {(i.cfg.alpha_v, i.cfg.alpha_i) for i in map(A.random_instance, range(100))}
    corners = {(a, b) for a in A.CORNER_ALPHAS for b in A.CORNER_ALPHAS}
    assert corners <= seen


def test_if_instances_match():
    rep = A.check_forward_equivalence(20, seed=0, corner=True)
    assert rep.ok


def test_zero_weight_nets_trivially_equivalent():
    inst = A.random_instance(5)
    zero = Parameters([np.zeros_like(w) for w in inst.params.weights],
                      [np.zeros_like(b) for b in inst.params.biases])
    a = forward_rnn(zero, inst.x, inst.shape, inst.cfg)
    b = forward_srm(zero, inst.x, inst.shape, inst.cfg)
    assert all(not s.any() for s in a.S[1:])
    for va, vb in zip(a.V[1:], b.V[1:]):
        assert np.array_equal(va, vb)


def test_method_equivalence_report():
    rep = A.check_method_equivalence(12, seed=3)
    assert rep.ok, rep
    assert rep.bptt_vs_activation < 1e-9 and rep.layer_split < 1e-9


def test_lambda_linearity_single_layer(rng):
    inst = A.random_instance(11, max_layers=2)
    if len(inst.shape.layer_sizes) != 2:
        pytest.skip("instance has hidden layers")
    trace = forward_rnn(inst.params, inst.x, inst.shape, inst.cfg)
    seeds = A.random_seeds(rng, trace.output)

    def g(la, lt):
        return backprop_antlr(trace, inst.params, seeds, MethodConfig(la, lt), inst.cfg)[1].flatten()

    assert np.allclose(g(2, 3), 2 * g(1, 0) + 3 * g(0, 1), rtol=0, atol=1e-12 * max(1, np.abs(g(2, 3)).max()))


def test_zero_spike_instance_gives_zero_grads():
    inst = A.random_instance(8)
    trace = forward_rnn(inst.params, inst.x, inst.shape, inst.cfg)
    zero = LS.LossGrads(np.zeros_like(trace.output), np.zeros_like(trace.output), 0.0)
    for m in (MethodConfig.activation(), MethodConfig.timing(), MethodConfig(1, 1)):
        assert not np.any(backprop_antlr(trace, inst.params, zero, m, inst.cfg)[1].flatten())
    bp = backprop_rnn_bptt(trace, inst.params, zero, MethodConfig(use_reset_paths=True), inst.cfg)
    assert not np.any(bp[1].flatten())


def test_silent_network_has_no_timing_gradient(rng):
    inst = A.random_instance(8)
    quiet = Parameters([np.zeros_like(w) for w in inst.params.weights],
                       [np.zeros_like(b) for b in inst.params.biases])
    trace = forward_rnn(quiet, inst.x, inst.shape, inst.cfg)
    seeds = LS.LossGrads(rng.normal(size=trace.output.shape), np.zeros_like(trace.output), 0.0)
    g = backprop_antlr(trace, quiet, seeds, MethodConfig.timing(), inst.cfg)[1].flatten()
    assert not np.any(g)


def test_oracle_is_seeded():
    a = A.check_method_equivalence(3, seed=9)
    b = A.check_method_equivalence(3, seed=9)
    assert a == b


# --- loss-gradient oracle ---------------------------------------------------------


@pytest.mark.parametrize("kind", ["count", "spike_train", "latency"])
def test_finite_difference_loss_oracle(kind):
    assert max(A.finite_diff_loss_grad(kind, s) for s in range(10)) < 1e-6


def test_finite_difference_rejects_unknown_loss():
    with pytest.raises(ConfigError):
        A.finite_diff_loss_grad("hinge", 0)


def test_spike_train_matching_target_gives_zero_seeds(rng):
    s = (rng.random((15, 2, 3)) < 0.2).astype(float)
    res = LS.spike_train_loss(s, LS.SpikeTrain(s.copy(), 0.9))
    assert res.loss_value == 0.0
    assert not res.dL_dS.any() and not res.dL_dthat.any()
    h = 1e-4
    for idx in zip(*np.nonzero(s)):
        sp_, sm = s.copy(), s.copy()
        sp_[idx] += h
        sm[idx] -= h
        num = (A._relaxed_spike_train(sp_, s, 0.9) - A._relaxed_spike_train(sm, s, 0.9)) / (2 * h)
        assert abs(num) < 1e-6


@pytest.mark.parametrize("beta", [0.3, 1.0, 2.5])
def test_latency_symmetric_two_class(beta):
    t = np.array([[4.0, 4.0]])
    h = 1e-4
    num = []
    for k in range(2):
        tp, tm = t.copy(), t.copy()
        tp[0, k] += h
        tm[0, k] -= h
        num.append((A._relaxed_latency(tp, [0], beta) - A._relaxed_latency(tm, [0], beta)) / (2 * h))
    assert num == pytest.approx([0.5 * beta, -0.5 * beta], abs=1e-6)
    s = np.zeros((8, 1, 2))
    s[4, 0, :] = 1
    got = LS.latency_loss(s, LS.Latency(np.array([0]), beta)).dL_dthat[4, 0]
    assert got == pytest.approx(num, abs=1e-6)
