"""Minimal reverse-mode automatic differentiation on float64 numpy arrays."""
from .gradcheck import check_gradients, numerical_gradient, relative_error
from .ops import (add, bilstm_encode, concat, conv2d, deconv2d, dropout, dynamic_conv1x1,
                  embedding_lookup, index, kl_div, linear, log_softmax_flat, lstm_scan, mean_all,
                  mul, relu, reshape, scale, softmax_flat, sum_all, tanh, transpose)
from .optim import AdamState, adam_step
from .tensor import Tape, Tensor, as_tensor, backward

__all__ = [
    "AdamState", "Tape", "Tensor", "adam_step", "add", "as_tensor", "backward", "bilstm_encode",
    "check_gradients", "concat", "conv2d", "deconv2d", "dropout", "dynamic_conv1x1",
    "embedding_lookup", "index", "kl_div", "linear", "log_softmax_flat", "lstm_scan", "mean_all",
    "mul", "numerical_gradient", "relative_error", "relu", "reshape", "scale", "softmax_flat",
    "sum_all", "tanh", "transpose",
]
