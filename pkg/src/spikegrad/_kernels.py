"""Numba-compiled time recursions shared by the forward and backward passes.

All kernels work on 2-D arrays of shape (T, M) where M flattens the batch and
neuron axes of one layer. Spikes are stored as float64 0/1.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def lif_scan(x, bias, alpha_v, alpha_i, beta_v, theta, single_spike, s, v, i):
    """Discrete LIF recursion with full reset of V and I.

    ``x`` already holds beta_i * sum_i w_ij S_i[t]; ``bias`` holds
    beta_bias * V_bias broadcast to M.
    """
    T, M = x.shape
    for m in range(M):
        v_prev = 0.0
        i_prev = 0.0
        s_prev = 0.0
        fired = False
        for t in range(T):
            keep = 1.0 - s_prev
            i_t = alpha_i * keep * i_prev + x[t, m]
            v_t = alpha_v * keep * v_prev + beta_v * i_t + bias[m]
            s_t = 0.0
            if v_t >= theta and not (single_spike and fired):
                s_t = 1.0
                fired = True
            s[t, m] = s_t
            v[t, m] = v_t
            i[t, m] = i_t
            v_prev = v_t
            i_prev = i_t
            s_prev = s_t


@numba.njit(cache=True)
def antlr_layer_backward(
    ds, dthat, s, v, alpha_v, alpha_i, beta_v, theta,
    lam_act, lam_tim, ste_alpha, ste_beta,
    dv, dv_act, dv_tim, dv_dep, di, p_i, dthat_out,
):
    """One layer of the combined backward pass, latest step first.

    ``p_i`` is the auxiliary accumulator sum_{t_a} dV[t_a] alpha_i^(t_a - t)
    over the reset-free window, used by the timing path of the layer below.
    Returns the number of spikes whose timing term was skipped (V* == 0).
    """
    T, M = ds.shape
    skipped = 0
    for m in range(M):
        dep_next = 0.0
        di_next = 0.0
        p_next = 0.0
        for t in range(T - 1, -1, -1):
            keep = 1.0 - s[t, m]
            sig = ste_alpha * np.exp(-ste_beta * abs(theta - v[t, m]))
            act = sig * ds[t, m]
            tim = 0.0
            if s[t, m] == 1.0:
                dthat_out[t, m] = dthat[t, m]
                v_prev = v[t - 1, m] if t > 0 else 0.0
                vstar = v[t, m] - v_prev
                if vstar == 0.0:
                    if lam_tim != 0.0 and dthat[t, m] != 0.0:
                        skipped += 1
                else:
                    tim = -dthat[t, m] / vstar
            else:
                dthat_out[t, m] = 0.0
            d = lam_act * act + lam_tim * tim
            dv_act[t, m] = act
            dv_tim[t, m] = tim
            dv[t, m] = d
            dep = d + alpha_v * keep * dep_next
            di_t = beta_v * dep + alpha_i * keep * di_next
            p = d + alpha_i * keep * p_next
            dv_dep[t, m] = dep
            di[t, m] = di_t
            p_i[t, m] = p
            dep_next = dep
            di_next = di_t
            p_next = p
    return skipped


@numba.njit(cache=True)
def bptt_layer_backward(
    ds_up, s, v, i, alpha_v, alpha_i, beta_v, theta,
    ste_alpha, ste_beta, reset_paths, ds, dv, dv_tot, di,
):
    """RNN-like BPTT for one layer; ``reset_paths`` adds the dS <- -alpha V dV terms."""
    T, M = ds_up.shape
    for m in range(M):
        dv_next = 0.0
        di_next = 0.0
        for t in range(T - 1, -1, -1):
            keep = 1.0 - s[t, m]
            g = ds_up[t, m]
            if reset_paths:
                g += -alpha_i * i[t, m] * di_next - alpha_v * v[t, m] * dv_next
            sig = ste_alpha * np.exp(-ste_beta * abs(theta - v[t, m]))
            local = sig * g
            tot = local + alpha_v * keep * dv_next
            di_t = beta_v * tot + alpha_i * keep * di_next
            ds[t, m] = g
            dv[t, m] = local
            dv_tot[t, m] = tot
            di[t, m] = di_t
            dv_next = tot
            di_next = di_t
