"""Discrete-time current-based LIF neurons.

Two evaluation strategies are provided. :func:`forward_rnn` runs the
recurrence on V and I with a full reset of both after each spike;
:func:`forward_srm` sums kernel responses to the presynaptic spikes that
arrived after the neuron's own last spike. They produce the same spikes.

Arrays carry time first and neurons last, with any number of batch axes in
between: ``(T, N)`` for one sample, ``(T, B, N)`` for a batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError

NO_SPIKE = -1


@dataclass(frozen=True)
class NeuronConfig:
    alpha_v: float = 0.95
    alpha_i: float = 0.95
    beta_v: float = 1.0
    beta_i: float = 1.0
    beta_bias: float = 1.0
    theta: float = 1.0

    def __post_init__(self):
        for name in ("alpha_v", "alpha_i"):
            a = getattr(self, name)
            if not 0.0 <= a <= 1.0:
                raise ConfigError(f"{name}={a} outside [0, 1]")
        if self.beta_v <= 0 or self.beta_i <= 0:
            raise ConfigError("beta_v and beta_i must be positive")
        if self.beta_bias < 0:
            raise ConfigError("beta_bias must be non-negative")
        if self.theta <= 0:
            raise ConfigError(f"theta={self.theta} must be positive")


@dataclass(frozen=True)
class NetworkShape:
    layer_sizes: tuple[int, ...]
    horizon_T: int
    single_spike_restriction: bool = False

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ConfigError("need at least an input and an output layer")
        if any(n < 1 for n in self.layer_sizes):
            raise ConfigError(f"layer sizes must be >= 1, got {self.layer_sizes}")
        if self.horizon_T < 1:
            raise ConfigError("horizon_T must be >= 1")

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes)


@dataclass
class Parameters:
    """``weights[l]`` has shape (N_l, N_{l+1}) and feeds layer ``l + 1``."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def check(self, shape: NetworkShape) -> None:
        sizes = shape.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ConfigError("parameter count does not match the layer count")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l], sizes[l + 1]):
                raise ConfigError(f"W[{l}] has shape {w.shape}, expected {(sizes[l], sizes[l + 1])}")
            if b.shape != (sizes[l + 1],):
                raise ConfigError(f"bias[{l}] has shape {b.shape}, expected {(sizes[l + 1],)}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ConfigError(f"non-finite entries in layer {l} parameters")

    def copy(self) -> Parameters:
        return Parameters([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def unflatten(self, vec: np.ndarray) -> Parameters:
        out_w, out_b, k = [], [], 0
        for w, b in zip(self.weights, self.biases):
            out_w.append(vec[k:k + w.size].reshape(w.shape))
            k += w.size
            out_b.append(vec[k:k + b.size].reshape(b.shape))
            k += b.size
        return Parameters(out_w, out_b)


@dataclass
class ForwardTrace:
    """Per-layer record of one forward pass.

    ``S`` and ``last_spike`` include the input layer at index 0; ``V`` and
    ``I`` hold ``None`` there because input neurons are pure spike sources.
    ``last_spike[l][t]`` is the most recent own spike strictly before ``t``
    or ``NO_SPIKE``.
    """

    S: list[np.ndarray]
    V: list[np.ndarray | None]
    I: list[np.ndarray | None]
    last_spike: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.last_spike:
            self.last_spike = [last_spike_index(s) for s in self.S]

    @property
    def output(self) -> np.ndarray:
        return self.S[-1]

    def spike_counts(self) -> np.ndarray:
        """Hidden + output spikes per sample (input excluded)."""
        return sum(s.sum(axis=(0, -1)) for s in self.S[1:])


def last_spike_index(s: np.ndarray) -> np.ndarray:
    T = s.shape[0]
    steps = np.arange(T).reshape((T,) + (1,) * (s.ndim - 1))
    seen = np.maximum.accumulate(np.where(s > 0, steps, NO_SPIKE), axis=0)
    out = np.full(s.shape, NO_SPIKE, dtype=np.int64)
    out[1:] = seen[:-1]
    return out


def kernel_eps(tau: int, cfg: NeuronConfig) -> float:
    """Spike response kernel, zero for negative lags."""
    if tau < 0:
        return 0.0
    return cfg.beta_i * cfg.beta_v * math.fsum(
        cfg.alpha_i ** k * cfg.alpha_v ** (tau - k) for k in range(tau + 1)
    )


def kernel_eps_star(tau: int, cfg: NeuronConfig) -> float:
    return 0.5 * (kernel_eps(tau + 1, cfg) - kernel_eps(tau - 1, cfg))


def eps_table(n: int, cfg: NeuronConfig) -> np.ndarray:
    """``kernel_eps(tau)`` for tau = 0..n-1 via the two-pole recursion."""
    out = np.empty(n)
    acc = 0.0
    ai_pow = 1.0
    for tau in range(n):
        acc = cfg.alpha_v * acc + ai_pow
        ai_pow *= cfg.alpha_i
        out[tau] = acc
    return cfg.beta_i * cfg.beta_v * out


def normalized_config(alpha_v: float, alpha_i: float, theta: float = 1.0, horizon: int = 1000) -> NeuronConfig:
    """Scale coefficients giving a unit kernel peak and a bias whose settled contribution to V is V_bias.

    With alpha_v = 1 the bias never settles; it is then spread over ``horizon`` steps.
    """
    unit = eps_table(horizon, NeuronConfig(alpha_v, alpha_i))
    beta_bias = 1.0 - alpha_v if alpha_v < 1 else 1.0 / horizon
    return NeuronConfig(alpha_v, alpha_i, beta_v=1.0 / unit.max(), beta_i=1.0, beta_bias=beta_bias, theta=theta)


def _check_input(params: Parameters, input_spikes: np.ndarray, shape: NetworkShape) -> np.ndarray:
    params.check(shape)
    x = np.asarray(input_spikes, dtype=np.float64)
    if x.ndim < 2 or x.shape[0] != shape.horizon_T or x.shape[-1] != shape.layer_sizes[0]:
        raise ConfigError(
            f"input spikes of shape {x.shape} do not match (T={shape.horizon_T}, ..., N={shape.layer_sizes[0]})"
        )
    if not np.all((x == 0) | (x == 1)):
        raise ConfigError("input spikes must be binary")
    return x


def forward_rnn(params: Parameters, input_spikes, shape: NetworkShape, cfg: NeuronConfig) -> ForwardTrace:
    s_prev = _check_input(params, input_spikes, shape)
    S, V, I = [s_prev], [None], [None]
    for w, b in zip(params.weights, params.biases):
        x = cfg.beta_i * (s_prev @ w)
        T, n = x.shape[0], x.shape[-1]
        x2 = np.ascontiguousarray(x.reshape(T, -1))
        bias = np.broadcast_to(cfg.beta_bias * b, x.shape[1:]).reshape(-1).copy()
        s, v, i = (np.empty_like(x2) for _ in range(3))
        _kernels.lif_scan(
            x2, bias, cfg.alpha_v, cfg.alpha_i, cfg.beta_v, cfg.theta,
            shape.single_spike_restriction, s, v, i,
        )
        s_prev = s.reshape(x.shape)
        S.append(s_prev)
        V.append(v.reshape(x.shape))
        I.append(i.reshape(x.shape))
    return ForwardTrace(S, V, I)


def forward_srm(params: Parameters, input_spikes, shape: NetworkShape, cfg: NeuronConfig) -> ForwardTrace:
    """Kernel-sum evaluation; also reconstructs I for comparison with :func:`forward_rnn`."""
    s_prev = _check_input(params, input_spikes, shape)
    T = shape.horizon_T
    eps = eps_table(T, cfg)
    # Current kernel: response of I to one presynaptic spike, and bias build-up of V.
    cur = cfg.beta_i * cfg.alpha_i ** np.arange(T)
    vbias = cfg.beta_bias * np.cumsum(cfg.alpha_v ** np.arange(T))
    S, V, I = [s_prev], [None], [None]
    for w, b in zip(params.weights, params.biases):
        drive = s_prev @ w
        out_shape = drive.shape
        s = np.zeros(out_shape)
        v = np.zeros(out_shape)
        i = np.zeros(out_shape)
        last = np.full(out_shape[1:], NO_SPIKE)
        fired = np.zeros(out_shape[1:], dtype=bool)
        for t in range(T):
            taus = np.arange(t + 1)
            # Presynaptic arrival times inside the causal set: last < tau <= t.
            window = taus.reshape((-1,) + (1,) * len(out_shape[1:])) > last
            lag = t - taus
            contrib = drive[: t + 1] * window
            v_t = np.tensordot(eps[lag], contrib, axes=(0, 0))
            i_t = np.tensordot(cur[lag], contrib, axes=(0, 0))
            v_t = v_t + vbias[t - last - 1] * b
            s_t = v_t >= cfg.theta
            if shape.single_spike_restriction:
                s_t &= ~fired
            fired |= s_t
            v[t], i[t], s[t] = v_t, i_t, s_t
            last = np.where(s_t, t, last)
        S.append(s)
        V.append(v)
        I.append(i)
        s_prev = s
    return ForwardTrace(S, V, I)
