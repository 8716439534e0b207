"""Small numpy neural-network kernel shared by the two taggers."""
from .gradcheck import gradient_check, numeric_gradient, relative_error
from .layers import (
    BackwardBeforeForward,
    Conv1d,
    Dense,
    ReLU,
    ShapeError,
    Sigmoid,
    Softmax,
    Tanh,
    bce_with_logits,
    glorot_uniform,
    logsumexp,
    relu,
    sigmoid,
    softmax,
    tanh,
)
from .optim import Adam

__all__ = [
    "Adam",
    "BackwardBeforeForward",
    "Conv1d",
    "Dense",
    "ReLU",
    "ShapeError",
    "Sigmoid",
    "Softmax",
    "Tanh",
    "bce_with_logits",
    "glorot_uniform",
    "gradient_check",
    "logsumexp",
    "numeric_gradient",
    "relative_error",
    "relu",
    "sigmoid",
    "softmax",
    "tanh",
]
