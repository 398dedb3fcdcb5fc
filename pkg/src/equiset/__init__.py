"""Permutation-equivariant set networks on numpy, with a small autodiff tape."""

from .layers import ARCHITECTURES, ModelSpec, init_params, model_forward, predict
from .tensor import Tensor, backward, grad_check

__version__ = "0.1.0"

__all__ = ["ARCHITECTURES", "ModelSpec", "Tensor", "backward", "grad_check", "init_params", "model_forward", "predict"]
