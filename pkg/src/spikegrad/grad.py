"""Hand-derived backward passes for the LIF network.

:func:`backprop_antlr` is the combined activation/timing rule. The pure
activation-based and timing-based methods are its (1, 0) and (0, 1)
settings. :func:`backprop_rnn_bptt` is the RNN-like BPTT, optionally
propagating through the reset terms.

Layers are processed top-down, each over the whole horizon, so the
upper layer's dV is complete before the layer below reads it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, DivergenceError
from .neuron import ForwardTrace, NeuronConfig, Parameters


@dataclass(frozen=True)
class MethodConfig:
    lambda_act: float = 1.0
    lambda_tim: float = 1.0
    ste_alpha: float = 0.3
    ste_beta: float = 1.0
    use_reset_paths: bool = False

    def __post_init__(self):
        if self.lambda_act < 0 or self.lambda_tim < 0:
            raise ConfigError("lambda weights must be non-negative")
        if self.lambda_act == 0 and self.lambda_tim == 0:
            raise ConfigError("lambda_act = lambda_tim = 0 leaves no gradient path")
        if self.ste_alpha <= 0 or self.ste_beta <= 0:
            raise ConfigError("ste_alpha and ste_beta must be positive")

    @classmethod
    def activation(cls, **kw) -> MethodConfig:
        return cls(lambda_act=1.0, lambda_tim=0.0, **kw)

    @classmethod
    def timing(cls, **kw) -> MethodConfig:
        return cls(lambda_act=0.0, lambda_tim=1.0, **kw)


@dataclass
class GradientTrace:
    """Backward buffers, indexed by layer like :class:`ForwardTrace` (``None`` at 0).

    ``dV_act`` and ``dV_tim`` are the unweighted activation and timing parts
    of ``dV``; ``dV = lambda_act * dV_act + lambda_tim * dV_tim``.
    """

    dS: list
    dV: list
    dV_dep: list
    dI: list
    dt_hat: list
    dV_act: list
    dV_tim: list
    vstar_guard: int = 0


@dataclass
class ParamGrads:
    dW: list[np.ndarray]
    dBias: list[np.ndarray]

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.dW, self.dBias) for a in pair])

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(g * g) for g in self.dW + self.dBias)))

    def __add__(self, other: ParamGrads) -> ParamGrads:
        return ParamGrads(
            [a + b for a, b in zip(self.dW, other.dW)],
            [a + b for a, b in zip(self.dBias, other.dBias)],
        )

    def scaled(self, c: float) -> ParamGrads:
        return ParamGrads([c * g for g in self.dW], [c * g for g in self.dBias])

    @classmethod
    def zeros_like(cls, params: Parameters) -> ParamGrads:
        return cls([np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])


def surrogate_sigma(v, cfg: NeuronConfig, m: MethodConfig):
    """Exponential surrogate for dS/dV, peaked at the threshold."""
    return m.ste_alpha * np.exp(-m.ste_beta * np.abs(cfg.theta - np.asarray(v, dtype=float)))


def v_star(trace: ForwardTrace, layer: int, t: int, neuron) -> float:
    """One-step backward difference of the potential, with V[-1] = 0."""
    v = trace.V[layer]
    prev = v[t - 1][neuron] if t > 0 else 0.0
    return float(v[t][neuron] - prev)


def v_star_all(v: np.ndarray) -> np.ndarray:
    out = v.copy()
    out[1:] -= v[:-1]
    return out


def _flat(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.reshape(a.shape[0], -1), dtype=np.float64)


def _sum_over_time_batch(pre: np.ndarray, post: np.ndarray) -> np.ndarray:
    """sum over t and batch of pre[..., i] * post[..., j]."""
    return pre.reshape(-1, pre.shape[-1]).T @ post.reshape(-1, post.shape[-1])


def timing_drive(dv, dv_dep, di, p_i, s, cfg: NeuronConfig) -> np.ndarray:
    """sum_{t_a >= t-1} dV[t_a] eps*[t_a - t] over the reset-free window, per postsynaptic neuron.

    Uses eps*[tau] = (eps[tau+1] - eps[tau-1]) / 2 split into a shifted-forward
    sum (from dI and the alpha_i accumulator) and a shifted-back sum (dI at t+1).
    """
    bb = cfg.beta_i * cfg.beta_v
    fwd = cfg.alpha_v * cfg.beta_i * di + bb * cfg.alpha_i * p_i
    back = np.zeros_like(di)
    back[:-1] = (1.0 - s[:-1]) * cfg.beta_i * di[1:]
    early = np.zeros_like(dv)
    early[1:] = bb * dv[:-1]
    return 0.5 * (early + fwd - back)


def assemble_param_grads(gtrace: GradientTrace, trace: ForwardTrace, cfg: NeuronConfig) -> ParamGrads:
    dW, dB = [], []
    for l in range(1, len(trace.S)):
        dW.append(cfg.beta_i * _sum_over_time_batch(trace.S[l - 1], gtrace.dI[l]))
        dB.append(cfg.beta_bias * gtrace.dV_dep[l].reshape(-1, gtrace.dV_dep[l].shape[-1]).sum(axis=0))
    return ParamGrads(dW, dB)


def _check_finite(gtrace: GradientTrace, method: str) -> None:
    for l in range(1, len(gtrace.dV)):
        for name in ("dS", "dV", "dV_dep", "dI", "dt_hat"):
            a = getattr(gtrace, name)[l]
            bad = ~np.isfinite(a)
            if bad.any():
                t = int(np.argwhere(bad)[0][0])
                raise DivergenceError(f"{method}: non-finite {name} at layer {l}, step {t}")


def _empty_trace(n_layers: int) -> GradientTrace:
    return GradientTrace(*([None] * n_layers for _ in range(7)))


def backprop_antlr(trace: ForwardTrace, params: Parameters, seeds, m: MethodConfig, cfg: NeuronConfig):
    """Combined backward pass; returns ``(GradientTrace, ParamGrads)``.

    ``seeds`` is any object with ``dL_dS`` and ``dL_dthat`` arrays shaped like
    the output spikes.
    """
    L = len(trace.S)
    g = _empty_trace(L)
    ds = np.asarray(seeds.dL_dS, dtype=float)
    dth = np.asarray(seeds.dL_dthat, dtype=float)
    for l in range(L - 1, 0, -1):
        shape = trace.S[l].shape
        s2, v2 = _flat(trace.S[l]), _flat(trace.V[l])
        outs = [np.empty_like(s2) for _ in range(7)]
        dv, dv_act, dv_tim, dv_dep, di, p_i, dth_out = outs
        g.vstar_guard += _kernels.antlr_layer_backward(
            _flat(ds), _flat(dth), s2, v2, cfg.alpha_v, cfg.alpha_i, cfg.beta_v, cfg.theta,
            m.lambda_act, m.lambda_tim, m.ste_alpha, m.ste_beta,
            dv, dv_act, dv_tim, dv_dep, di, p_i, dth_out,
        )
        g.dS[l] = ds.reshape(shape)
        g.dt_hat[l] = dth_out.reshape(shape)
        g.dV[l], g.dV_act[l], g.dV_tim[l] = (a.reshape(shape) for a in (dv, dv_act, dv_tim))
        g.dV_dep[l], g.dI[l] = dv_dep.reshape(shape), di.reshape(shape)
        if l > 1:
            w_t = params.weights[l - 1].T
            ds = cfg.beta_i * (g.dI[l] @ w_t)
            drive = timing_drive(dv, dv_dep, di, p_i, s2, cfg).reshape(shape)
            # eps*[t_a - t_hat] is a derivative in the lag, so d/dt_hat flips its sign
            dth = -(drive @ w_t)
    _check_finite(g, "antlr")
    return g, assemble_param_grads(g, trace, cfg)


def backprop_activation(trace, params, seeds, cfg: NeuronConfig, ste_alpha=0.3, ste_beta=1.0):
    return backprop_antlr(trace, params, seeds, MethodConfig.activation(ste_alpha=ste_alpha, ste_beta=ste_beta), cfg)


def backprop_timing(trace, params, seeds, cfg: NeuronConfig):
    return backprop_antlr(trace, params, seeds, MethodConfig.timing(), cfg)


def backprop_rnn_bptt(trace: ForwardTrace, params: Parameters, seeds, m: MethodConfig, cfg: NeuronConfig):
    """RNN-like BPTT from the activation seeds; timing seeds are ignored.

    The accumulated potential gradient is stored in ``dV_dep`` and the local
    surrogate term in ``dV`` so the buffers line up with :func:`backprop_antlr`.
    """
    L = len(trace.S)
    g = _empty_trace(L)
    ds_up = np.asarray(seeds.dL_dS, dtype=float)
    for l in range(L - 1, 0, -1):
        shape = trace.S[l].shape
        ds, dv, dv_tot, di = (np.empty((shape[0], math.prod(shape[1:]))) for _ in range(4))
        _kernels.bptt_layer_backward(
            _flat(ds_up), _flat(trace.S[l]), _flat(trace.V[l]), _flat(trace.I[l]),
            cfg.alpha_v, cfg.alpha_i, cfg.beta_v, cfg.theta,
            m.ste_alpha, m.ste_beta, m.use_reset_paths, ds, dv, dv_tot, di,
        )
        g.dS[l], g.dV[l], g.dV_dep[l], g.dI[l] = (a.reshape(shape) for a in (ds, dv, dv_tot, di))
        g.dV_act[l] = g.dV[l]
        g.dV_tim[l] = np.zeros(shape)
        g.dt_hat[l] = np.zeros(shape)
        if l > 1:
            ds_up = cfg.beta_i * (g.dI[l] @ params.weights[l - 1].T)
    _check_finite(g, "bptt")
    return g, assemble_param_grads(g, trace, cfg)
