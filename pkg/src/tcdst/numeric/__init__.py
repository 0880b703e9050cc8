"""Dense arithmetic, reverse-mode autodiff, Adam and gradient checking."""

from . import kernels
from .adam import AdamState, adam_step
from .functional import cross_entropy, layer_norm, softmax
from .gradcheck import GradCheckReport, grad_check, relative_error
from .tensor import Tensor, dropout, embedding, gelu, matmul, nll, no_grad

__all__ = [
    "AdamState", "GradCheckReport", "Tensor", "adam_step", "cross_entropy", "dropout", "embedding",
    "gelu", "grad_check", "kernels", "layer_norm", "matmul", "nll", "no_grad", "relative_error",
    "softmax",
]
