"""Verification oracles and the loss-landscape pipeline.

Oracles
    * :func:`finite_diff_loss_grad` compares each loss's analytic seeds with
      central differences of an independently written relaxed loss.
    * :func:`check_forward_equivalence` runs the recurrent and kernel-sum
      forward passes on random networks.
    * :func:`check_method_equivalence` checks BPTT-without-reset against the
      activation-only rule, linearity in the lambda weights and in the seeds,
      and where timing information may live.

Landscape
    Principal directions of a gradient history, a grid scan of the true loss
    and each method's projected gradient, and least-squares integration of a
    gradient field back to a surface.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import losses as LS
from .errors import ConfigError
from .grad import MethodConfig, backprop_antlr, backprop_rnn_bptt
from .neuron import NetworkShape, NeuronConfig, Parameters, eps_table, forward_rnn, forward_srm

CORNER_ALPHAS = (0.0, 0.95, 0.99, 1.0)


# ---------------------------------------------------------------------------
# random instances


@dataclass
class Instance:
    seed: int
    shape: NetworkShape
    cfg: NeuronConfig
    params: Parameters
    x: np.ndarray


def random_instance(seed: int, max_layers: int = 4, max_neurons: int = 20, max_T: int = 50,
                    corner: bool | None = None) -> Instance:
    """A small random network with input spikes, scaled so that most layers fire.

    Every other instance draws alpha_v and alpha_i from the corner set
    {0, 0.95, 0.99, 1} (IF neurons included); the rest are uniform in (0, 1).
    """
    rng = np.random.default_rng(seed)
    n_layers = int(rng.integers(2, max_layers + 1))
    sizes = tuple(int(n) for n in rng.integers(1, max_neurons + 1, size=n_layers))
    T = int(rng.integers(2, max_T + 1))
    corner = bool(seed % 2 == 0) if corner is None else corner
    if corner:
        alpha_v, alpha_i = (float(a) for a in rng.choice(CORNER_ALPHAS, size=2))
    else:
        alpha_v, alpha_i = (float(a) for a in rng.uniform(0.0, 1.0, size=2))
    cfg = NeuronConfig(
        alpha_v, alpha_i,
        beta_v=float(rng.uniform(0.5, 1.5)), beta_i=float(rng.uniform(0.5, 1.5)),
        beta_bias=float(rng.uniform(0.0, 1.0)), theta=float(rng.uniform(0.5, 1.5)),
    )
    peak = eps_table(T, cfg).max()
    x = (rng.random((T, sizes[0])) < rng.uniform(0.05, 0.4)).astype(float)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        scale = rng.uniform(0.5, 3.0) * cfg.theta / (peak * np.sqrt(n_in))
        weights.append(rng.normal(0.0, scale, size=(n_in, n_out)) + 0.3 * scale)
        biases.append(rng.normal(0.0, 0.05 * cfg.theta, size=n_out))
    shape = NetworkShape(sizes, T, single_spike_restriction=bool(rng.random() < 0.2))
    return Instance(seed, shape, cfg, Parameters(weights, biases), x)


def random_seeds(rng: np.random.Generator, s_out: np.ndarray) -> LS.LossGrads:
    """Arbitrary output seeds; timing seeds only where the output spiked."""
    ds = rng.normal(size=s_out.shape)
    dth = rng.normal(size=s_out.shape) * (s_out == 1)
    return LS.LossGrads(ds, dth, 0.0)


def _rel_dev(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), 1e-300)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)


# ---------------------------------------------------------------------------
# loss-gradient oracle


def _relaxed_count(s, targets, T):
    return np.sum((s.sum(axis=0) - targets) ** 2) / T


def _relaxed_spike_train(s, target, kappa):
    T = s.shape[0]
    tau = np.arange(T)
    lag = tau[:, None] - tau[None, :]
    k = np.where(lag >= 0, kappa ** np.maximum(lag, 0), 0.0)
    d = np.einsum("at,t...->a...", k, s - target)
    return np.sum(d * d)


def _kappa_real(lag: np.ndarray, kappa: float) -> np.ndarray:
    """Quadratic interpolation of the causal exponential kernel through the three nearest lags."""
    c = np.round(lag)
    u = lag - c

    def k(n):
        return np.where(n >= 0, kappa ** np.maximum(n, 0), 0.0)

    km, k0, kp = k(c - 1), k(c), k(c + 1)
    return k0 + 0.5 * u * (kp - km) + 0.5 * u * u * (kp - 2 * k0 + km)


def _spike_train_from_times(times: np.ndarray, neuron: np.ndarray, target_filtered: np.ndarray,
                            kappa: float, T: int) -> float:
    """Spike-train loss of one sample whose output spikes sit at real-valued times."""
    tau = np.arange(T, dtype=float)
    filt = np.zeros_like(target_filtered)
    for t_hat, n in zip(times, neuron):
        filt[:, n] += _kappa_real(tau - t_hat, kappa)
    d = filt - target_filtered
    return float(np.sum(d * d))


def _relaxed_latency(t_hat, labels, beta):
    z = -beta * t_hat
    z = z - z.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return -np.sum(np.take_along_axis(logp, np.asarray(labels)[..., None], axis=-1))


def finite_diff_loss_grad(kind: str, seed: int, h: float = 1e-4) -> float:
    """Largest |analytic seed - central difference| on one random instance.

    ``kind`` is ``count``, ``spike_train`` or ``latency``. Spike arrays are
    relaxed to real values; spike-train timing uses the quadratic-interpolated
    kernel, latency treats first-spike times as reals.
    """
    rng = np.random.default_rng(seed)
    T = int(rng.integers(5, 40))
    B = int(rng.integers(1, 4))
    n = int(rng.integers(1, 6))
    s = (rng.random((T, B, n)) < rng.uniform(0.02, 0.3)).astype(float)
    worst = 0.0

    if kind == "count":
        targets = rng.integers(0, 4, size=(B, n)).astype(float)
        got = LS.count_loss(s, LS.Count(targets)).dL_dS
        for idx in np.ndindex(s.shape):
            sp_, sm = s.copy(), s.copy()
            sp_[idx] += h
            sm[idx] -= h
            num = (_relaxed_count(sp_, targets, T) - _relaxed_count(sm, targets, T)) / (2 * h)
            worst = max(worst, abs(num - got[idx]))
        return worst

    if kind == "spike_train":
        kappa = float(rng.uniform(0.5, 0.99))
        target = (rng.random((T, B, n)) < 0.1).astype(float)
        res = LS.spike_train_loss(s, LS.SpikeTrain(target, kappa))
        for idx in np.ndindex(s.shape):
            sp_, sm = s.copy(), s.copy()
            sp_[idx] += h
            sm[idx] -= h
            num = (_relaxed_spike_train(sp_, target, kappa) - _relaxed_spike_train(sm, target, kappa)) / (2 * h)
            worst = max(worst, abs(num - res.dL_dS[idx]))
        tau = np.arange(T)
        kmat = np.where(tau[:, None] >= tau[None, :], kappa ** np.maximum(tau[:, None] - tau[None, :], 0), 0.0)
        for b in range(B):
            tf = kmat @ target[:, b, :]
            times, neuron = (a.astype(float) for a in np.nonzero(s[:, b, :]))
            neuron = neuron.astype(int)
            for k in range(times.size):
                tp, tm = times.copy(), times.copy()
                tp[k] += h
                tm[k] -= h
                num = (_spike_train_from_times(tp, neuron, tf, kappa, T)
                       - _spike_train_from_times(tm, neuron, tf, kappa, T)) / (2 * h)
                worst = max(worst, abs(num - res.dL_dthat[int(times[k]), b, neuron[k]]))
        # no timing seed off the spikes
        worst = max(worst, float(np.max(np.abs(res.dL_dthat * (s == 0)), initial=0.0)))
        return worst

    if kind == "latency":
        labels = rng.integers(0, n, size=B)
        beta = float(rng.uniform(0.1, 2.0))
        res = LS.latency_loss(s, LS.Latency(labels, beta))
        fired = s.any(axis=0)
        first = np.where(fired, np.argmax(s > 0, axis=0), T).astype(float)
        for b, o in np.ndindex(B, n):
            if not fired[b, o]:
                continue
            tp, tm = first.copy(), first.copy()
            tp[b, o] += h
            tm[b, o] -= h
            num = (_relaxed_latency(tp, labels, beta) - _relaxed_latency(tm, labels, beta)) / (2 * h)
            worst = max(worst, abs(num - res.dL_dthat[int(first[b, o]), b, o]))
        # the seed sits only on first spikes
        mask = np.zeros_like(s, dtype=bool)
        for b, o in zip(*np.nonzero(fired)):
            mask[int(first[b, o]), b, o] = True
        worst = max(worst, float(np.max(np.abs(res.dL_dthat[~mask]), initial=0.0)))
        return worst

    raise ConfigError(f"no finite-difference oracle for loss {kind!r}")


# ---------------------------------------------------------------------------
# forward and method equivalence


@dataclass
class ForwardReport:
    n_instances: int = 0
    spike_mismatches: int = 0
    max_potential_dev: float = 0.0
    failing_seeds: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.spike_mismatches == 0 and self.max_potential_dev < 1e-9


def check_forward_equivalence(n_trials: int = 100, seed: int = 0, **instance_kw) -> ForwardReport:
    """Recurrent vs kernel-sum forward pass. Potential deviation is relative to max(1, |V|)."""
    rep = ForwardReport()
    for k in range(n_trials):
        inst = random_instance(seed * 100_003 + k, **instance_kw)
        a = forward_rnn(inst.params, inst.x, inst.shape, inst.cfg)
        b = forward_srm(inst.params, inst.x, inst.shape, inst.cfg)
        mism = sum(int(np.sum(sa != sb)) for sa, sb in zip(a.S, b.S))
        dev = 0.0
        for va, vb in zip(a.V[1:], b.V[1:]):
            dev = max(dev, float(np.max(np.abs(va - vb)) / max(1.0, np.max(np.abs(va)))))
        rep.n_instances += 1
        rep.spike_mismatches += mism
        rep.max_potential_dev = max(rep.max_potential_dev, dev)
        if mism or dev >= 1e-9:
            rep.failing_seeds.append(inst.seed)
    return rep


@dataclass
class MethodReport:
    n_instances: int = 0
    bptt_vs_activation: float = 0.0
    lambda_linearity: float = 0.0
    seed_linearity: float = 0.0
    layer_split: float = 0.0
    timing_off_spike: float = 0.0
    zero_seed_grad: float = 0.0
    failing_seeds: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return max(self.bptt_vs_activation, self.lambda_linearity, self.seed_linearity,
                   self.layer_split) < 1e-9 and self.timing_off_spike == 0.0 and self.zero_seed_grad == 0.0


def _grads_vec(res) -> np.ndarray:
    return res[1].flatten()


def check_method_equivalence(n_trials: int = 100, seed: int = 0, lambdas=(2.0, 3.0), **instance_kw) -> MethodReport:
    """Cross-checks of the backward passes on random instances.

    * BPTT without reset paths equals the activation-only rule (all buffers and parameter grads).
    * Global linearity ``g(a, b) = a g(1, 0) + b g(0, 1)`` on networks with one trainable
      layer. Deeper networks are not globally linear: hidden timing and activation parts
      are fed by upper-layer gradients that already carry both weights. There the check is
      the per-layer split ``dV = a dV_act + b dV_tim``.
    * Linearity in the output seeds, for any depth and any weights.
    * Pure timing: timing gradients and dV_tim vanish off spike steps.
    * Zero seeds give zero parameter gradients.
    """
    rep = MethodReport()
    la, lt = lambdas
    for k in range(n_trials):
        inst = random_instance(seed * 100_003 + k, **instance_kw)
        rng = np.random.default_rng([inst.seed, 1])
        trace = forward_rnn(inst.params, inst.x, inst.shape, inst.cfg)
        seeds = random_seeds(rng, trace.output)
        cfg, p = inst.cfg, inst.params
        ste = dict(ste_alpha=float(rng.uniform(0.1, 1.0)), ste_beta=float(rng.uniform(0.5, 3.0)))
        act = backprop_antlr(trace, p, seeds, MethodConfig.activation(**ste), cfg)
        bptt = backprop_rnn_bptt(trace, p, seeds, MethodConfig.activation(**ste), cfg)
        dev_a = _rel_dev(_grads_vec(act), _grads_vec(bptt))
        for l in range(1, len(trace.S)):
            dev_a = max(dev_a, _rel_dev(act[0].dV_dep[l], bptt[0].dV_dep[l]),
                        _rel_dev(act[0].dI[l], bptt[0].dI[l]))

        tim = backprop_antlr(trace, p, seeds, MethodConfig.timing(**ste), cfg)
        mix = backprop_antlr(trace, p, seeds, MethodConfig(la, lt, **ste), cfg)
        split = 0.0
        for l in range(1, len(trace.S)):
            g = mix[0]
            split = max(split, _rel_dev(g.dV[l], la * g.dV_act[l] + lt * g.dV_tim[l]))
        lin = 0.0
        if len(trace.S) == 2:
            lin = _rel_dev(_grads_vec(mix), la * _grads_vec(act) + lt * _grads_vec(tim))

        other = random_seeds(rng, trace.output)
        c = float(rng.normal())
        combo = LS.LossGrads(seeds.dL_dS + c * other.dL_dS, seeds.dL_dthat + c * other.dL_dthat, 0.0)
        m = MethodConfig(la, lt, **ste)
        seed_lin = _rel_dev(
            _grads_vec(backprop_antlr(trace, p, combo, m, cfg)),
            _grads_vec(mix) + c * _grads_vec(backprop_antlr(trace, p, other, m, cfg)),
        )

        off = 0.0
        for l in range(1, len(trace.S)):
            quiet = trace.S[l] == 0
            off = max(off, float(np.max(np.abs(tim[0].dt_hat[l][quiet]), initial=0.0)),
                      float(np.max(np.abs(tim[0].dV_tim[l][quiet]), initial=0.0)))

        zero = LS.LossGrads(np.zeros_like(trace.output), np.zeros_like(trace.output), 0.0)
        zg = max(float(np.max(np.abs(backprop_antlr(trace, p, zero, m, cfg)[1].flatten()))),
                 float(np.max(np.abs(backprop_rnn_bptt(trace, p, zero, MethodConfig(**ste, use_reset_paths=True), cfg)[1].flatten()))))

        rep.n_instances += 1
        rep.bptt_vs_activation = max(rep.bptt_vs_activation, dev_a)
        rep.lambda_linearity = max(rep.lambda_linearity, lin)
        rep.layer_split = max(rep.layer_split, split)
        rep.seed_linearity = max(rep.seed_linearity, seed_lin)
        rep.timing_off_spike = max(rep.timing_off_spike, off)
        rep.zero_seed_grad = max(rep.zero_seed_grad, zg)
        if max(dev_a, lin, split, seed_lin) >= 1e-9 or off or zg:
            rep.failing_seeds.append(inst.seed)
    return rep


# ---------------------------------------------------------------------------
# landscape


def pca_directions(history, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Top two principal directions of the mean-centred history, orthonormal."""
    X = np.asarray([np.ravel(g) for g in history], dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ConfigError("need at least two gradient vectors")
    X = X - X.mean(axis=0)
    _, sv, vt = np.linalg.svd(X, full_matrices=False)
    if sv.size < 2 or sv[0] == 0.0 or sv[1] <= tol * sv[0]:
        raise ConfigError(f"centred gradient history has rank < 2 (singular values {sv[:3]})")
    q, _ = np.linalg.qr(vt[:2].T)
    return q[:, 0].copy(), q[:, 1].copy()


@dataclass
class LandscapeGrid:
    dim0: np.ndarray
    dim1: np.ndarray
    coords0: np.ndarray       # grid coordinates along dim0 (parameter-space units)
    coords1: np.ndarray
    true_loss: np.ndarray     # (len(coords0), len(coords1))
    spike_count: np.ndarray
    grad0: dict               # method -> g . dim0 on the grid
    grad1: dict
    surfaces: dict = field(default_factory=dict)

    @property
    def center(self) -> tuple[int, int]:
        return int(np.argmin(np.abs(self.coords0))), int(np.argmin(np.abs(self.coords1)))

    @property
    def unchanged(self) -> np.ndarray:
        """Points whose total hidden+output spike count equals the centre's."""
        return self.spike_count == self.spike_count[self.center]

    def reconstruct(self) -> dict:
        h0 = self.coords0[1] - self.coords0[0]
        h1 = self.coords1[1] - self.coords1[0]
        self.surfaces = {m: reconstruct_surface(self.grad0[m], self.grad1[m], (h0, h1), self.center)
                         for m in self.grad0}
        return self.surfaces


LANDSCAPE_METHODS = {
    "activation": (1.0, 0.0),
    "timing": (0.0, 1.0),
    "antlr": (1.0, 1.0),
}


def landscape_scan(params: Parameters, dims, coords0, coords1, x: np.ndarray, target: np.ndarray,
                   shape: NetworkShape, cfg: NeuronConfig, kappa: float = 0.95,
                   ste_alpha: float = 0.3, ste_beta: float = 1.0, methods=LANDSCAPE_METHODS) -> LandscapeGrid:
    """True spike-train loss and projected gradients at ``params + a dim0 + b dim1``."""
    dim0, dim1 = (np.asarray(d, dtype=float) for d in dims)
    base = params.flatten()
    n0, n1 = len(coords0), len(coords1)
    true_loss = np.empty((n0, n1))
    count = np.empty((n0, n1), dtype=np.int64)
    g0 = {m: np.empty((n0, n1)) for m in methods}
    g1 = {m: np.empty((n0, n1)) for m in methods}
    spec = LS.SpikeTrain(target, kappa)
    for i, a in enumerate(coords0):
        for j, b in enumerate(coords1):
            p = params.unflatten(base + a * dim0 + b * dim1)
            trace = forward_rnn(p, x, shape, cfg)
            seeds = LS.spike_train_loss(trace.output, spec)
            true_loss[i, j] = seeds.loss_value
            count[i, j] = int(trace.spike_counts().sum())
            for m, (la, lt) in methods.items():
                g = backprop_antlr(trace, p, seeds, MethodConfig(la, lt, ste_alpha, ste_beta), cfg)[1].flatten()
                g0[m][i, j] = g @ dim0
                g1[m][i, j] = g @ dim1
    return LandscapeGrid(dim0, dim1, np.asarray(coords0, float), np.asarray(coords1, float),
                         true_loss, count, g0, g1)


def _diff_operators(n0: int, n1: int, h0: float, h1: float):
    """Forward-difference operators on a row-major (n0, n1) grid."""
    d0 = sp.diags([-np.ones(n0 - 1), np.ones(n0 - 1)], [0, 1], shape=(n0 - 1, n0)) / h0
    d1 = sp.diags([-np.ones(n1 - 1), np.ones(n1 - 1)], [0, 1], shape=(n1 - 1, n1)) / h1
    return sp.kron(d0, sp.identity(n1)), sp.kron(sp.identity(n0), d1)


def integrate_edges(e0: np.ndarray, e1: np.ndarray, spacing=(1.0, 1.0), anchor=None) -> np.ndarray:
    """Least-squares surface whose forward differences best match the edge slopes.

    ``e0`` has shape (n0 - 1, n1): slope between (i, j) and (i + 1, j).
    ``e1`` has shape (n0, n1 - 1). The surface is zero at ``anchor``
    (default: the grid centre).
    """
    n0, n1 = e0.shape[0] + 1, e1.shape[1] + 1
    if e0.shape != (n0 - 1, n1) or e1.shape != (n0, n1 - 1):
        raise ConfigError(f"edge fields of shape {e0.shape} and {e1.shape} do not form a grid")
    anchor = (n0 // 2, n1 // 2) if anchor is None else anchor
    D0, D1 = _diff_operators(n0, n1, *spacing)
    A = sp.vstack([D0, D1]).tocsc()
    rhs = np.concatenate([np.ravel(e0), np.ravel(e1)])
    keep = np.ones(n0 * n1, dtype=bool)
    keep[anchor[0] * n1 + anchor[1]] = False
    A = A[:, keep]
    z = np.zeros(n0 * n1)
    z[keep] = spla.spsolve((A.T @ A).tocsc(), A.T @ rhs)
    return z.reshape(n0, n1)


def edge_slopes(g: np.ndarray, axis: int = 0) -> np.ndarray:
    """Mean of a sampled derivative over each grid edge along ``axis``.

    Four-point quadrature, exact for cubic derivatives: interior edges use
    (-g[i-1] + 13 g[i] + 13 g[i+1] - g[i+2]) / 24, the two end edges a
    one-sided rule. Fewer than four samples fall back to the trapezoid.
    """
    g = np.moveaxis(np.asarray(g, dtype=float), axis, 0)
    n = g.shape[0]
    out = 0.5 * (g[1:] + g[:-1])
    if n >= 4:
        out[1:-1] = (-g[:-3] + 13 * g[1:-2] + 13 * g[2:-1] - g[3:]) / 24
        out[0] = (9 * g[0] + 19 * g[1] - 5 * g[2] + g[3]) / 24
        out[-1] = (9 * g[-1] + 19 * g[-2] - 5 * g[-3] + g[-4]) / 24
    return np.moveaxis(out, 0, axis)


def reconstruct_surface(g0: np.ndarray, g1: np.ndarray, spacing=(1.0, 1.0), anchor=None) -> np.ndarray:
    """Integrate a point-sampled gradient field (dz/d0, dz/d1) on a grid, zero at ``anchor``."""
    return integrate_edges(edge_slopes(g0, 0), edge_slopes(g1, 1), spacing, anchor)


def write_grid_csv(path, matrix: np.ndarray, coords0, coords1) -> None:
    """Rows follow dim0, columns dim1; first row and column carry the coordinates."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dim0\\dim1"] + [repr(float(c)) for c in coords1])
        for c, row in zip(coords0, np.asarray(matrix)):
            w.writerow([repr(float(c))] + [repr(v.item()) for v in row])


def read_grid_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    coords1 = np.array([float(v) for v in rows[0][1:]])
    coords0 = np.array([float(r[0]) for r in rows[1:]])
    mat = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return mat, coords0, coords1


def export_landscape(grid: LandscapeGrid, out_dir) -> list[Path]:
    out = Path(out_dir)
    if not grid.surfaces:
        grid.reconstruct()
    files = {
        "true_loss.csv": grid.true_loss,
        "spike_count.csv": grid.spike_count,
        "unchanged_mask.csv": grid.unchanged.astype(int),
    }
    for m in grid.grad0:
        files[f"surface_{m}.csv"] = grid.surfaces[m]
        files[f"grad0_{m}.csv"] = grid.grad0[m]
        files[f"grad1_{m}.csv"] = grid.grad1[m]
    written = []
    for name, mat in files.items():
        write_grid_csv(out / name, mat, grid.coords0, grid.coords1)
        written.append(out / name)
    np.savez(out / "directions.npz", dim0=grid.dim0, dim1=grid.dim1)
    written.append(out / "directions.npz")
    return written


def zero_fractions(grid: LandscapeGrid, rel_tol: float = 1e-2) -> dict:
    """Per method, the share of unchanged-count points whose projected gradient is 'zero'.

    A projected gradient counts as zero when its magnitude is below ``rel_tol``
    times that method's largest magnitude on the grid.
    """
    mask = grid.unchanged
    out = {}
    for m in grid.grad0:
        mag = np.hypot(grid.grad0[m], grid.grad1[m])
        ref = mag.max()
        zero = mag <= rel_tol * ref if ref > 0 else np.ones_like(mag, dtype=bool)
        out[m] = float(zero[mask].mean())
    return out


def run_landscape(exp, out_dir=None, extent: float = 1.0, n_grid: int = 41, zero_tol: float = 1e-2):
    """Train a matching instance to zero loss, scan the grid, reconstruct, export.

    Grid coordinates are in units of the RMS training step, i.e. the RMS of the
    recorded gradient norms times the learning rate.
    """
    from .train import train_to_optimum

    opt = train_to_optimum(exp)
    dims = pca_directions(opt.history)
    step = float(np.sqrt(np.mean([g @ g for g in opt.history]))) * exp.learning_rate
    coords = np.linspace(-extent, extent, n_grid) * step
    grid = landscape_scan(opt.params, dims, coords, coords, opt.x, opt.target, exp.network, exp.neuron,
                          exp.kappa_exp, exp.ste_alpha, exp.ste_beta)
    grid.reconstruct()
    if out_dir is not None:
        export_landscape(grid, out_dir)
    i, j = grid.center
    zf = zero_fractions(grid, zero_tol)
    summary = {
        "trial": opt.trial,
        "iterations_to_zero": opt.iterations,
        "rms_step": step,
        "center_loss": float(grid.true_loss[i, j]),
        "unchanged_points": int(grid.unchanged.sum()),
        "zero_fraction": zf,
        "nonzero_fraction": {m: 1.0 - v for m, v in zf.items()},
    }
    return grid, summary
