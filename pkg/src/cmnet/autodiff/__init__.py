"""Minimal dense tensor engine with reverse-mode autodiff."""
from . import ops
from .conv import causal_padding, conv2d, conv2d_transpose
from .gradcheck import GradCheckReport, check_parameters, finite_difference_check
from .layers import batch_norm, gru_sequence, gru_step
from .ops import causal_mask, matmul, mean_pool, softmax
from .tensor import ShapeError, Tensor, as_tensor, is_grad_enabled, no_grad, topological_order

__all__ = [
    "GradCheckReport", "ShapeError", "Tensor", "as_tensor", "batch_norm", "causal_mask", "causal_padding",
    "check_parameters", "conv2d", "conv2d_transpose", "finite_difference_check", "gru_sequence", "gru_step",
    "is_grad_enabled", "matmul", "mean_pool", "no_grad", "ops", "softmax", "topological_order",
]
