"""Float64 tensor math, autodiff, Gaussian ops, Adam and checkpoint blocks."""

from . import gaussian
from .adam import AdamState, adam_step
from .autodiff import Tensor, as_tensor, concat, grad_enabled, no_grad, stack
from .layers import (
    collect_grads,
    linear,
    linear_params,
    lstm_params,
    lstm_step,
    mlp_elu,
    mlp_params,
    uniform_init,
    wrap_leaves,
    zero_state,
)
from .params import ParamSet

__all__ = [
    "AdamState",
    "ParamSet",
    "Tensor",
    "adam_step",
    "as_tensor",
    "collect_grads",
    "concat",
    "gaussian",
    "grad_enabled",
    "linear",
    "linear_params",
    "lstm_params",
    "lstm_step",
    "mlp_elu",
    "mlp_params",
    "no_grad",
    "stack",
    "uniform_init",
    "wrap_leaves",
    "zero_state",
]
