"""Parameterised layers built on :mod:`lldg.nn.autograd`."""
import numpy as np

from .autograd import Tensor, conv1d, gelu, layer_norm, linear, matmul, prelu, softmax

__all__ = [
    "Module",
    "Parameter",
    "Linear",
    "Conv1d",
    "PReLU",
    "LayerNorm",
    "MultiHeadSelfAttention",
    "TransformerBlock",
    "multi_head_attention",
]


def Parameter(data, name=None):
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _uniform_fan_in(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Container that discovers parameters through its attributes."""

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    def __init__(self, in_features, out_features, rng, bias=True):
        self.weight = Parameter(_uniform_fan_in(rng, (in_features, out_features), in_features))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x):
        return linear(x, self.weight, self.bias)


class Conv1d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, rng):
        if kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {kernel_size}")
        fan_in = in_channels * kernel_size
        self.weight = Parameter(_uniform_fan_in(rng, (out_channels, in_channels, kernel_size), fan_in))
        self.bias = Parameter(np.zeros(out_channels))

    def forward(self, x):
        return conv1d(x, self.weight, self.bias)


class PReLU(Module):
    def __init__(self, init=0.25):
        self.alpha = Parameter(np.array([init]))

    def forward(self, x):
        return prelu(x, self.alpha)


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x):
        return layer_norm(x, self.gamma, self.beta, self.eps)


def multi_head_attention(x, w_qkv, b_qkv, w_out, b_out, heads):
    """Scaled dot-product self-attention over ``heads`` heads.

    ``x`` is ``(batch, tokens, dim)``. Returns the projected output and the
    attention weights, shape ``(batch, heads, tokens, tokens)``.
    """
    n, tokens, dim = x.shape
    if dim % heads:
        raise ValueError(f"dim {dim} is not divisible by {heads} heads")
    dh = dim // heads
    qkv = linear(x, w_qkv, b_qkv).reshape(n, tokens, 3, heads, dh).transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = matmul(q, k.swapaxes(-1, -2)) * (1.0 / np.sqrt(dh))
    weights = softmax(scores, axis=-1)
    ctx = matmul(weights, v).transpose(0, 2, 1, 3).reshape(n, tokens, dim)
    return linear(ctx, w_out, b_out), weights


class MultiHeadSelfAttention(Module):
    def __init__(self, dim, heads, rng):
        if dim % heads:
            raise ValueError(f"dim {dim} is not divisible by {heads} heads")
        self.heads = heads
        self.w_qkv = Parameter(_uniform_fan_in(rng, (dim, 3 * dim), dim))
        self.b_qkv = Parameter(np.zeros(3 * dim))
        self.w_out = Parameter(_uniform_fan_in(rng, (dim, dim), dim))
        self.b_out = Parameter(np.zeros(dim))
        self.last_weights = None

    def forward(self, x):
        out, weights = multi_head_attention(x, self.w_qkv, self.b_qkv, self.w_out, self.b_out, self.heads)
        self.last_weights = weights.data
        return out


class TransformerBlock(Module):
    """Pre-norm encoder block: attention and a GELU MLP, each with a residual."""

    def __init__(self, dim, heads, mlp_ratio, rng):
        hidden = int(dim * mlp_ratio)
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.fc2(gelu(self.fc1(self.norm2(x))))
