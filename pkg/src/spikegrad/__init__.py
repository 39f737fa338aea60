"""Spiking-network training with combined activation- and timing-based gradients."""

from .errors import ConfigError, DivergenceError, ParseError
from .grad import MethodConfig, ParamGrads, backprop_antlr, backprop_rnn_bptt
from .neuron import ForwardTrace, NetworkShape, NeuronConfig, Parameters, forward_rnn, forward_srm

__all__ = [
    "ConfigError", "DivergenceError", "ParseError",
    "MethodConfig", "ParamGrads", "backprop_antlr", "backprop_rnn_bptt",
    "ForwardTrace", "NetworkShape", "NeuronConfig", "Parameters", "forward_rnn", "forward_srm",
]
__version__ = "0.1.0"
