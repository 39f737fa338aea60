"""Output losses and the backward seeds dL/dS_o[t] and dL/dt_hat_o.

Spike arrays are ``(T, ..., N_out)``. Losses are summed over any batch axes,
matching the batch-summed parameter gradients used in training.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Count:
    targets: np.ndarray  # (..., N_out) target spike numbers

    def __post_init__(self):
        if np.any(np.asarray(self.targets) < 0):
            raise ConfigError("count targets must be non-negative")


@dataclass(frozen=True)
class SpikeTrain:
    target: np.ndarray  # (T, ..., N_out) binary
    kappa_exp: float = 0.95

    def __post_init__(self):
        if not 0 < self.kappa_exp < 1:
            raise ConfigError("kappa_exp must be in (0, 1)")


@dataclass(frozen=True)
class Latency:
    labels: np.ndarray  # (...) integer class per sample
    beta_softmax: float = 1.0

    def __post_init__(self):
        if self.beta_softmax <= 0:
            raise ConfigError("beta_softmax must be positive")


@dataclass(frozen=True)
class MinCount:
    labels: np.ndarray
    time_scaled: bool = False  # divide the seed by T like the count loss (then it is not dL/dS)


@dataclass(frozen=True)
class NoSpikePenalty:
    eta: float = 1e-3


@dataclass
class LossGrads:
    dL_dS: np.ndarray
    dL_dthat: np.ndarray
    loss_value: float
    silent_outputs: int = 0

    def __add__(self, other: LossGrads) -> LossGrads:
        return LossGrads(
            self.dL_dS + other.dL_dS,
            self.dL_dthat + other.dL_dthat,
            self.loss_value + other.loss_value,
            self.silent_outputs + other.silent_outputs,
        )


def exp_kernel(T: int, kappa: float) -> np.ndarray:
    """kappa**tau for tau = -T..T (index tau + T), zero for tau < 0."""
    tau = np.arange(-T, T + 1)
    return np.where(tau >= 0, kappa ** np.maximum(tau, 0), 0.0)


def exp_kernel_star(T: int, kappa: float) -> np.ndarray:
    """Central difference of :func:`exp_kernel` on tau = -T..T."""
    k = exp_kernel(T + 1, kappa)
    return 0.5 * (k[2:] - k[:-2])


def _lag_matrix(kern: np.ndarray, T: int) -> np.ndarray:
    """M[tau, t] = kern[tau - t] for a kernel stored on lags -T..T."""
    tau = np.arange(T)
    return kern[tau[:, None] - tau[None, :] + T]


@lru_cache(maxsize=16)
def _filter_matrices(T: int, kappa: float) -> tuple[np.ndarray, np.ndarray]:
    return _lag_matrix(exp_kernel(T, kappa), T), _lag_matrix(exp_kernel_star(T, kappa), T)


def filtered_difference(s: np.ndarray, target: np.ndarray, kappa: float) -> np.ndarray:
    K, _ = _filter_matrices(s.shape[0], kappa)
    return np.tensordot(K, s - target, axes=(1, 0))


def _out(x) -> np.ndarray:
    """Accept a ForwardTrace or a bare output spike array."""
    return np.asarray(x.S[-1] if hasattr(x, "S") else x, dtype=float)


def count_loss(s_out, spec: Count) -> LossGrads:
    s_out = _out(s_out)
    T = s_out.shape[0]
    err = s_out.sum(axis=0) - spec.targets
    ds = np.broadcast_to(2.0 * err / T, s_out.shape).copy()
    return LossGrads(ds, np.zeros_like(s_out), float(np.sum(err ** 2) / T))


def spike_train_loss(s_out, spec: SpikeTrain) -> LossGrads:
    s_out = _out(s_out)
    T = s_out.shape[0]
    target = np.asarray(spec.target, dtype=float)
    if target.shape != s_out.shape:
        raise ConfigError(f"target shape {target.shape} != output shape {s_out.shape}")
    d = filtered_difference(s_out, target, spec.kappa_exp)
    K, Ks = _filter_matrices(T, spec.kappa_exp)
    ds = 2.0 * np.tensordot(K.T, d, axes=(1, 0))
    dth = -2.0 * np.tensordot(Ks.T, d, axes=(1, 0)) * (s_out == 1)
    return LossGrads(ds, dth, float(np.sum(d ** 2)))


def first_spike_times(s_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First spike step per neuron (T where silent) and the silence mask."""
    T = s_out.shape[0]
    fired = s_out.any(axis=0)
    first = np.where(fired, np.argmax(s_out > 0, axis=0), T)
    return first, ~fired


def softmax_neg(t_hat: np.ndarray, beta: float) -> np.ndarray:
    z = -beta * t_hat
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def latency_loss(s_out, spec: Latency) -> LossGrads:
    """Cross-entropy of softmax(-beta * first spike time); silent neurons use t_hat = T."""
    s_out = _out(s_out)
    first, silent = first_spike_times(s_out)
    n_out = s_out.shape[-1]
    y = np.eye(n_out)[np.asarray(spec.labels)]
    z = -spec.beta_softmax * first.astype(float)
    z = z - z.max(axis=-1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    p = np.exp(log_p)
    loss = -np.sum(y * log_p)
    g = -spec.beta_softmax * (p - y)
    dth = np.zeros_like(s_out, dtype=float)
    idx = np.indices(first.shape)
    fired = ~silent
    t_idx = np.where(fired, first, 0)
    dth[(t_idx,) + tuple(idx)] = np.where(fired, g, 0.0)
    return LossGrads(np.zeros_like(s_out, dtype=float), dth, float(loss), int(silent.sum()))


def min_count_variant(s_out, spec: MinCount) -> LossGrads:
    s_out = _out(s_out)
    T = s_out.shape[0]
    n_out = s_out.shape[-1]
    y = np.eye(n_out)[np.asarray(spec.labels)]
    c = np.minimum((s_out.sum(axis=0) * y).sum(axis=-1), 1.0)
    err = c - 1.0
    scale = 2.0 / T if spec.time_scaled else 2.0
    ds = np.broadcast_to((scale * err)[..., None] * y, s_out.shape).copy()
    return LossGrads(ds, np.zeros_like(s_out, dtype=float), float(np.sum(err ** 2)))


def no_spike_penalty(trace, grads, spec: NoSpikePenalty):
    """Push the incoming weights of silent neurons up by ``eta`` (per silent sample).

    Returns a new ParamGrads; ``grads.dW[l]`` feeds layer ``l + 1``.
    """
    dW = [g.copy() for g in grads.dW]
    for l in range(1, len(trace.S)):
        s = trace.S[l]
        silent = (s.sum(axis=0) == 0).reshape(-1, s.shape[-1]).sum(axis=0)
        dW[l - 1] -= spec.eta * silent[None, :]
    return type(grads)(dW, [g.copy() for g in grads.dBias])


def compute_loss(s_out, spec) -> LossGrads:
    if isinstance(spec, Count):
        return count_loss(s_out, spec)
    if isinstance(spec, SpikeTrain):
        return spike_train_loss(s_out, spec)
    if isinstance(spec, Latency):
        return latency_loss(s_out, spec)
    if isinstance(spec, MinCount):
        return min_count_variant(s_out, spec)
    raise ConfigError(f"not an output loss: {spec!r}")
