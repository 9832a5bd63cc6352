"""Minimal reverse-mode autodiff engine and the layer set used here."""

from .checkpoint import load_checkpoint, save_checkpoint
from .init import LayerSpec, init_weights
from .optim import AdamState, adam_step
from .tensor import (Tensor, absolute, add, backward, bmm, concat, dropout,
                     exp, expand_mid, gather_rows, log, matmul,
                     maxpool_over_points, mul, narrow, parameter, pow_const,
                     reduce_max, reduce_mean, reduce_sum, relu, reshape,
                     sigmoid, sigmoid_cross_entropy_mean, softmax_cross_entropy,
                     softmax_cross_entropy_mean, sub, transpose2d, zero_grad)
from .units import (LEARNABLE_ORDER_EPS, high_order_unit, learnable_order_unit,
                    pair_index_count, perceptron_unit, square_unit,
                    triple_index_count)

__all__ = [
    "Tensor", "LayerSpec", "AdamState",
    "absolute", "add", "adam_step", "backward", "bmm", "concat", "dropout",
    "exp", "expand_mid", "gather_rows", "init_weights", "load_checkpoint",
    "log", "matmul", "maxpool_over_points", "mul", "narrow", "parameter",
    "pow_const", "reduce_max", "reduce_mean", "reduce_sum", "relu", "reshape",
    "save_checkpoint", "sigmoid", "sigmoid_cross_entropy_mean",
    "softmax_cross_entropy", "softmax_cross_entropy_mean", "sub",
    "transpose2d", "zero_grad",
    "LEARNABLE_ORDER_EPS", "high_order_unit", "learnable_order_unit",
    "pair_index_count", "perceptron_unit", "square_unit", "triple_index_count",
]
