"""Slow explicit-window backward pass used as an oracle for :mod:`spikegrad.grad`.

Every presynaptic-to-postsynaptic influence is summed directly with the
kernels ``kernel_eps`` / ``kernel_eps_star`` over the window in which the
postsynaptic neuron has not reset, read from ``trace.last_spike``. Nothing
here uses the recursive accumulators of the fast engine.
"""

from __future__ import annotations

import numpy as np

from .grad import MethodConfig, ParamGrads, surrogate_sigma
from .neuron import ForwardTrace, NeuronConfig, Parameters, kernel_eps, kernel_eps_star


def _kernel_rows(T: int, cfg: NeuronConfig):
    eps = np.array([kernel_eps(k, cfg) for k in range(-1, T + 1)])
    eps_star = np.array([kernel_eps_star(k, cfg) for k in range(-1, T + 1)])
    # index k + 1 holds the kernel at lag k
    return eps, eps_star


def reference_backprop(trace: ForwardTrace, params: Parameters, seeds, m: MethodConfig, cfg: NeuronConfig):
    """Returns ``(dV, dt_hat, ParamGrads)`` with dV/dt_hat as per-layer lists."""
    L = len(trace.S)
    T = trace.S[0].shape[0]
    eps, eps_star = _kernel_rows(T, cfg)
    dV = [None] * L
    dthat = [None] * L
    dW = [None] * (L - 1)
    dB = [None] * (L - 1)
    ds = np.asarray(seeds.dL_dS, dtype=float)
    dth = np.asarray(seeds.dL_dthat, dtype=float)
    for l in range(L - 1, 0, -1):
        s, v = trace.S[l], trace.V[l]
        vprev = np.concatenate([np.zeros_like(v[:1]), v[:-1]])
        vstar = v - vprev
        dth = np.where(s == 1, dth, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            tim = np.where((s == 1) & (vstar != 0), -dth / vstar, 0.0)
        dv = m.lambda_act * surrogate_sigma(v, cfg, m) * ds + m.lambda_tim * tim
        dV[l], dthat[l] = dv, dth

        last = trace.last_spike[l]
        s_pre = trace.S[l - 1]
        w = params.weights[l - 1]
        # resp[t] = sum_{t_a in window(t)} dV[t_a] eps[t_a - t], per postsynaptic neuron.
        resp = np.zeros_like(dv)
        resp_star = np.zeros_like(dv)
        bias_resp = np.zeros(dv.shape[1:])
        for t_a in range(T):
            # bias reaches V[t_a] from every step after the last reset
            n_steps = t_a - last[t_a]
            if cfg.alpha_v == 1:
                build_up = n_steps.astype(float)
            else:
                build_up = (1 - cfg.alpha_v ** n_steps) / (1 - cfg.alpha_v)
            bias_resp += dv[t_a] * cfg.beta_bias * build_up
            for t in range(0, min(t_a + 2, T)):
                lag = t_a - t
                if lag >= 0:
                    open_ = t > last[t_a]
                    resp[t] += np.where(open_, dv[t_a] * eps[lag + 1], 0.0)
                    resp_star[t] += np.where(open_, dv[t_a] * eps_star[lag + 1], 0.0)
                else:
                    resp_star[t] += dv[t_a] * eps_star[lag + 1]
        dW[l - 1] = s_pre.reshape(-1, s_pre.shape[-1]).T @ resp.reshape(-1, resp.shape[-1])
        dB[l - 1] = bias_resp.reshape(-1, bias_resp.shape[-1]).sum(axis=0)
        ds = resp @ w.T
        # dV[t_a]/dt_hat = -w eps*[t_a - t_hat]: a later spike is a kernel shifted right
        dth = -(resp_star @ w.T)
    return dV, dthat, ParamGrads(dW, dB)
