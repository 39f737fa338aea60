"""Initialization and first-order updates over :class:`Parameters`."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .grad import ParamGrads
from .neuron import NetworkShape, NeuronConfig, Parameters


def init_params(shape: NetworkShape, seed: int, init_bias_center: bool = False,
                cfg: NeuronConfig | None = None) -> Parameters:
    """Weights ~ N(0, 1/fan_in); biases 0, or theta/2 with ``init_bias_center``."""
    rng = np.random.default_rng(seed)
    theta = (cfg or NeuronConfig()).theta
    weights, biases = [], []
    for n_in, n_out in zip(shape.layer_sizes[:-1], shape.layer_sizes[1:]):
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, n_out)))
        biases.append(np.full(n_out, 0.5 * theta if init_bias_center else 0.0))
    return Parameters(weights, biases)


def clip_grads(grads: ParamGrads, grad_clip: float, mode: str = "norm") -> ParamGrads:
    if grad_clip <= 0:
        raise ConfigError("grad_clip must be positive")
    if mode == "value":
        return ParamGrads([np.clip(g, -grad_clip, grad_clip) for g in grads.dW],
                          [np.clip(g, -grad_clip, grad_clip) for g in grads.dBias])
    if mode != "norm":
        raise ConfigError(f"unknown clip mode {mode!r}")
    norm = grads.norm()
    if norm <= grad_clip:
        return grads
    return grads.scaled(grad_clip / norm)


@dataclass
class OptimizerState:
    variant: str = "sgd"
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    grad_clip: float = 1e6
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.variant not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.variant!r}")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")


def _pairs(params: Parameters, grads: ParamGrads):
    ps = params.weights + params.biases
    gs = grads.dW + grads.dBias
    if [p.shape for p in ps] != [g.shape for g in gs]:
        raise ConfigError("gradient shapes do not match parameters")
    return ps, gs


def _split(params: Parameters, arrays: list) -> Parameters:
    n = len(params.weights)
    return Parameters(arrays[:n], arrays[n:])


def sgd_step(params: Parameters, grads: ParamGrads, state: OptimizerState) -> Parameters:
    ps, gs = _pairs(params, grads)
    lr, wd = state.learning_rate, state.weight_decay
    return _split(params, [p - lr * (g + wd * p) for p, g in zip(ps, gs)])


def adam_step(params: Parameters, grads: ParamGrads, state: OptimizerState) -> tuple[Parameters, OptimizerState]:
    ps, gs = _pairs(params, grads)
    if not state.m:
        state.m = [np.zeros_like(p) for p in ps]
        state.v = [np.zeros_like(p) for p in ps]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    out = []
    for k, (p, g) in enumerate(zip(ps, gs)):
        g = g + state.weight_decay * p
        state.m[k] = b1 * state.m[k] + (1 - b1) * g
        state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        m_hat = state.m[k] / c1
        v_hat = state.v[k] / c2
        out.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps_adam))
    return _split(params, out), state


def optimizer_step(params: Parameters, grads: ParamGrads, state: OptimizerState) -> Parameters:
    if state.variant == "adam":
        return adam_step(params, grads, state)[0]
    return sgd_step(params, grads, state)
