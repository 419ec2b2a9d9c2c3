"""The grid model: feature extractor, low-rank projector and mixer head."""
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tucker
from .nn import (
    AdamW,
    Conv1d,
    Linear,
    Module,
    PReLU,
    Tensor,
    TransformerBlock,
    load_checkpoint,
    relu,
    save_checkpoint,
    softmax,
    straight_through,
    tanh,
)

__all__ = [
    "LldgModelConfig",
    "LldgModel",
    "loss_d",
    "loss_g",
    "total_loss",
    "save_model",
    "load_model",
]


@dataclass
class LldgModelConfig:
    """Architecture and objective settings.

    ``tucker_ranks`` accepts ``None`` (``ceil(c/2)`` per mode), ``"full"``
    or three ints. ``use_tucker=False`` bypasses the projector entirely.
    """

    c: int
    n: int
    conv_kernels: tuple = (3, 5, 7)
    conv_channels: tuple = (32, 64, 64)
    embed_dim: int = 64
    heads: int = 4
    depth: int = 1
    mlp_ratio: float = 2.0
    tucker_ranks: object = None
    use_tucker: bool = True
    hooi_sweeps: int = 0
    lam: float = 0.5
    grid_loss: str = "l2"
    variance_mode: str = "variance"
    resample_prior: bool = True
    init_seed: int = 0
    gradient_rule: str = field(default="straight-through", init=False)

    def __post_init__(self):
        if self.c < 2:
            raise ValueError("need at least two labels")
        if self.n < 1:
            raise ValueError("need at least one feature")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if len(self.conv_kernels) != len(self.conv_channels):
            raise ValueError("conv_kernels and conv_channels must have equal length")
        if self.grid_loss not in ("l2", "l1"):
            raise ValueError(f"grid_loss must be 'l2' or 'l1', got {self.grid_loss!r}")
        if self.variance_mode not in ("variance", "std"):
            raise ValueError(f"variance_mode must be 'variance' or 'std', got {self.variance_mode!r}")
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")
        self.conv_kernels = tuple(int(k) for k in self.conv_kernels)
        self.conv_channels = tuple(int(ch) for ch in self.conv_channels)
        if isinstance(self.tucker_ranks, list):
            self.tucker_ranks = tuple(self.tucker_ranks)
        self.resolved_ranks()

    def resolved_ranks(self):
        return tucker.resolve_ranks(self.tucker_ranks, (self.c,) * 3)

    def to_dict(self):
        d = asdict(self)
        d["conv_kernels"] = list(self.conv_kernels)
        d["conv_channels"] = list(self.conv_channels)
        if isinstance(self.tucker_ranks, tuple):
            d["tucker_ranks"] = list(self.tucker_ranks)
        d["resolved_ranks"] = list(self.resolved_ranks())
        return d

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in d.items() if k not in ("resolved_ranks", "gradient_rule")}
        return cls(**d)


class LldgModel(Module):
    def __init__(self, config):
        self.config = config
        rng = np.random.default_rng(config.init_seed)
        c, n = config.c, config.n

        channels = (1,) + config.conv_channels
        self.convs = [Conv1d(channels[i], channels[i + 1], k, rng) for i, k in enumerate(config.conv_kernels)]
        self.acts = [PReLU() for _ in config.conv_kernels]
        self.embed = Linear(channels[-1], config.embed_dim, rng) if channels[-1] != config.embed_dim else None
        self.blocks = [TransformerBlock(config.embed_dim, config.heads, config.mlp_ratio, rng) for _ in range(config.depth)]
        self.to_grid = Linear(n * config.embed_dim, c**3, rng)
        self.mixer = [Linear(c, c, rng) for _ in range(3)]
        self.ranks = config.resolved_ranks()

    # -- pieces -------------------------------------------------------------

    def extractor_forward(self, x):
        """Map a ``(batch, n)`` feature block to grids ``(batch, c, c, c)`` in (-1, 1)."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 2 or x.shape[1] != self.config.n:
            raise ValueError(f"expected features of shape (batch, {self.config.n}), got {x.shape}")
        batch, c = x.shape[0], self.config.c
        h = x.reshape(batch, 1, self.config.n)
        for conv, act in zip(self.convs, self.acts):
            h = act(conv(h))
        # features become tokens: (batch, length, channels)
        h = h.transpose(0, 2, 1)
        if self.embed is not None:
            h = self.embed(h)
        for block in self.blocks:
            h = block(h)
        h = self.to_grid(h.reshape(batch, -1))
        return tanh(h.reshape(batch, c, c, c))

    def project(self, b):
        """Low-rank Tucker projection with a straight-through gradient."""
        if not self.config.use_tucker:
            return b
        ranks, sweeps = self.ranks, self.config.hooi_sweeps

        def fn(g):
            # non-finite grids pass through so the loss check reports them
            if not np.all(np.isfinite(g)):
                return g
            return tucker.tucker_project(g, ranks, sweeps)

        return straight_through(b, fn)

    def mixer_forward(self, b):
        """Collapse grids ``(batch, c, c, c)`` into label distributions ``(batch, c)``.

        Each linear layer mixes one grid axis; the axes roll between layers
        so the three layers act on x, y and z in turn.
        """
        b = b if isinstance(b, Tensor) else Tensor(b)
        c = self.config.c
        if b.ndim != 4 or b.shape[1:] != (c, c, c):
            raise ValueError(f"expected grids of shape (batch, {c}, {c}, {c}), got {b.shape}")
        h = b
        for i, layer in enumerate(self.mixer):
            # (x, y, z) -> (y, z, x): the axis to mix moves last
            h = layer(h.transpose(0, 2, 3, 1))
            if i < len(self.mixer) - 1:
                h = relu(h)
        # after three rolls the axes are back in (x, y, z) order
        scores = h.sum(axis=3).sum(axis=1)
        return softmax(scores, axis=-1)

    def forward(self, x):
        b = self.extractor_forward(x)
        b_star = self.project(b)
        return b, b_star, self.mixer_forward(b_star)

    def grid_loss(self, b, bhat):
        return loss_g(b, bhat, kind=self.config.grid_loss)

    def state_arrays(self):
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_arrays(self, arrays):
        params = dict(self.named_parameters())
        missing = set(params) - set(arrays)
        if missing:
            raise ValueError(f"checkpoint is missing parameters: {sorted(missing)}")
        for name, p in params.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ValueError(f"parameter {name!r} has shape {value.shape}, expected {p.shape}")
            p.data = value.copy()


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def loss_d(lhat, l):
    """Squared error over the ``c`` label components, averaged over labels and batch."""
    lhat, l = _as_tensor(lhat), _as_tensor(l)
    if lhat.shape != l.shape:
        raise ValueError(f"prediction shape {lhat.shape} does not match target {l.shape}")
    return ((lhat - l) ** 2).mean()


def loss_g(b, bhat, kind="l2"):
    """Entrywise grid distance averaged over the ``c**3`` cells and the batch."""
    b, bhat = _as_tensor(b), _as_tensor(bhat)
    if b.shape != bhat.shape:
        raise ValueError(f"grid shape {b.shape} does not match prior {bhat.shape}")
    diff = b - bhat
    if kind == "l2":
        return (diff**2).mean()
    if kind == "l1":
        return diff.abs().mean()
    raise ValueError(f"unknown grid loss {kind!r}")


def total_loss(ld, lg, lam):
    return ld + lg * lam


def save_model(path, model, optimizer=None, metadata=None):
    meta = dict(metadata or {})
    meta["model_config"] = model.config.to_dict()
    save_checkpoint(path, model.state_arrays(), meta, optimizer.state_dict() if optimizer else None)


def load_model(path, with_optimizer=False, **optim_kwargs):
    """Rebuild a model (and optionally its AdamW state) from a checkpoint."""
    params, meta, optim_state = load_checkpoint(path)
    config = LldgModelConfig.from_dict(meta["model_config"])
    model = LldgModel(config)
    model.load_state_arrays(params)
    if not with_optimizer:
        return model, meta
    opt = AdamW(model.named_parameters(), **optim_kwargs)
    if optim_state:
        opt.load_state_dict(optim_state)
    return model, meta, opt
