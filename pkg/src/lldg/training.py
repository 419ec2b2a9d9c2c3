"""Mini-batch training of :class:`~lldg.model.LldgModel` with AdamW."""
import math
import time
from dataclasses import dataclass

import numpy as np

from .metrics import evaluate_batch
from .model import loss_d, total_loss
from .nn import AdamW, TrainingError, clip_grad_norm, no_grad
from .prior import difference_matrix, sample_prior_grids, sample_seed

__all__ = [
    "EpochStats",
    "PriorSampler",
    "train_step",
    "train_epoch",
    "fit",
    "predict",
    "predict_grids",
    "evaluate_model",
    "make_optimizer",
]


@dataclass
class EpochStats:
    epoch: int
    loss_d: float
    loss_g: float
    total: float
    seconds: float = 0.0

    def as_record(self):
        return {
            "epoch": self.epoch,
            "loss_d": self.loss_d,
            "loss_g": self.loss_g,
            "total": self.total,
            "wall_clock": self.seconds,
        }


class PriorSampler:
    """Supplies prior grids for a dataset's ground-truth labels.

    With ``resample=True`` every call draws fresh grids from ``rng``.
    Otherwise each sample gets one fixed draw, seeded by
    ``seed XOR sample_index`` and cached.
    """

    def __init__(self, labels, variance_mode="variance", resample=True, seed=0):
        self.diffs = difference_matrix(labels)
        self.variance_mode = variance_mode
        self.resample = resample
        self.seed = seed
        self._cache = {}

    def __call__(self, indices, rng):
        if self.resample:
            return sample_prior_grids(self.diffs[indices], rng, self.variance_mode)
        return np.stack([self._fixed(int(i)) for i in indices])

    def _fixed(self, i):
        if i not in self._cache:
            rng = np.random.default_rng(sample_seed(self.seed, i))
            self._cache[i] = sample_prior_grids(self.diffs[i], rng, self.variance_mode)
        return self._cache[i]


def make_optimizer(model, lr=1e-3, weight_decay=0.01, betas=(0.9, 0.999), eps=1e-8):
    return AdamW(model.named_parameters(), lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)


def _batch_losses(model, x, l, bhat):
    b, _, lhat = model(x)
    ld = loss_d(lhat, l)
    lg = model.grid_loss(b, bhat)
    return ld, lg, total_loss(ld, lg, model.config.lam)


def train_step(model, optimizer, x, l, bhat, clip_norm=5.0):
    """One forward/backward/update on a batch; returns the three losses."""
    optimizer.zero_grad()
    ld, lg, tot = _batch_losses(model, x, l, bhat)
    if not math.isfinite(tot.item()):
        raise TrainingError(
            f"non-finite loss (loss_d={ld.item()}, loss_g={lg.item()}) at step {optimizer.step_count + 1}"
        )
    tot.backward()
    if clip_norm is not None:
        clip_grad_norm(optimizer.params.values(), clip_norm)
    optimizer.step()
    return ld.item(), lg.item(), tot.item()


def train_epoch(model, optimizer, features, labels, batch_size, rng, sampler=None, clip_norm=5.0, epoch=0):
    """Run one shuffled pass over the data and return mean losses."""
    m = features.shape[0]
    if m == 0:
        raise ValueError("empty training set")
    if sampler is None:
        sampler = PriorSampler(labels, model.config.variance_mode, model.config.resample_prior)
    start = time.perf_counter()
    order = rng.permutation(m)
    sums = np.zeros(3)
    for lo in range(0, m, batch_size):
        idx = order[lo:lo + batch_size]
        bhat = sampler(idx, rng)
        losses = train_step(model, optimizer, features[idx], labels[idx], bhat, clip_norm)
        sums += len(idx) * np.array(losses)
    ld, lg, tot = sums / m
    return EpochStats(epoch, float(ld), float(lg), float(tot), time.perf_counter() - start)


def predict_grids(model, features, batch_size=512):
    """Return ``(B, B*, predictions)`` as arrays, without recording a graph."""
    outs = ([], [], [])
    with no_grad():
        for lo in range(0, features.shape[0], batch_size):
            for acc, t in zip(outs, model(features[lo:lo + batch_size])):
                acc.append(t.data)
    return tuple(np.concatenate(acc) for acc in outs)


def predict(model, features, batch_size=512):
    return predict_grids(model, features, batch_size)[2]


def validation_loss(model, features, labels, sampler, batch_size=512):
    """Total loss on held-out data against fixed per-sample priors."""
    b, _, lhat = predict_grids(model, features, batch_size)
    bhat = sampler(np.arange(features.shape[0]), None)
    ld = loss_d(lhat, labels).item()
    lg = model.grid_loss(b, bhat).item()
    return ld, lg, total_loss(ld, lg, model.config.lam)


def evaluate_model(model, features, labels, batch_size=512):
    return evaluate_batch(labels, predict(model, features, batch_size))


def fit(
    model,
    train,
    val=None,
    epochs=500,
    batch_size=128,
    lr=1e-3,
    weight_decay=0.01,
    seed=0,
    clip_norm=5.0,
    patience=None,
    log=None,
):
    """Train ``model`` on ``train`` (features, labels).

    When ``val`` is given, the parameters with the lowest validation total
    loss are restored at the end. ``log`` receives one record per epoch.
    Returns ``(history, optimizer)``.
    """
    x, l = train
    rng = np.random.default_rng(seed)
    optimizer = make_optimizer(model, lr=lr, weight_decay=weight_decay)
    sampler = PriorSampler(l, model.config.variance_mode, model.config.resample_prior, seed)
    val_sampler = None
    if val is not None:
        val_sampler = PriorSampler(val[1], model.config.variance_mode, resample=False, seed=seed + 1)
    best, best_state, since_best = math.inf, None, 0
    history = []
    for epoch in range(1, epochs + 1):
        stats = train_epoch(model, optimizer, x, l, batch_size, rng, sampler, clip_norm, epoch)
        record = stats.as_record()
        if val is not None:
            vd, vg, vt = validation_loss(model, val[0], val[1], val_sampler)
            record.update(val_loss_d=vd, val_loss_g=vg, val_total=vt)
            if vt < best:
                best, since_best = vt, 0
                best_state = {k: v.copy() for k, v in model.state_arrays().items()}
                record["best"] = True
            else:
                since_best += 1
        history.append(record)
        if log is not None:
            log(record)
        if patience is not None and since_best > patience:
            break
    if best_state is not None:
        model.load_state_arrays(best_state)
    return history, optimizer
