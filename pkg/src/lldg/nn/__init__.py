"""A small reverse-mode autodiff engine and the layers the grid model uses."""
from .autograd import (
    Tensor,
    activation,
    conv1d,
    gelu,
    layer_norm,
    linear,
    matmul,
    no_grad,
    prelu,
    relu,
    softmax,
    straight_through,
    tanh,
    tensor,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    Conv1d,
    LayerNorm,
    Linear,
    Module,
    MultiHeadSelfAttention,
    Parameter,
    PReLU,
    TransformerBlock,
    multi_head_attention,
)
from .optim import AdamW, TrainingError, clip_grad_norm

__all__ = [
    "Tensor",
    "tensor",
    "activation",
    "conv1d",
    "gelu",
    "layer_norm",
    "linear",
    "matmul",
    "no_grad",
    "prelu",
    "relu",
    "softmax",
    "straight_through",
    "tanh",
    "Module",
    "Parameter",
    "Linear",
    "Conv1d",
    "PReLU",
    "LayerNorm",
    "MultiHeadSelfAttention",
    "TransformerBlock",
    "multi_head_attention",
    "AdamW",
    "TrainingError",
    "clip_grad_norm",
    "save_checkpoint",
    "load_checkpoint",
]
