"""The six standard label-distribution evaluation measures."""
from dataclasses import dataclass, field

import numpy as np

from .prior import check_distribution

__all__ = ["EPS", "METRICS", "MetricReport", "evaluate", "evaluate_batch", "pairwise_metrics"]

EPS = 1e-12

# name -> True if larger is better
METRICS = {
    "chebyshev": False,
    "clark": False,
    "canberra": False,
    "kl": False,
    "cosine": True,
    "intersection": True,
}


def pairwise_metrics(d, dhat):
    """Per-row metric values for two ``(m, c)`` arrays of distributions."""
    d = np.atleast_2d(np.asarray(d, dtype=np.float64))
    dhat = np.atleast_2d(np.asarray(dhat, dtype=np.float64))
    if d.shape != dhat.shape:
        raise ValueError(f"shape mismatch: {d.shape} vs {dhat.shape}")
    check_distribution(d)
    check_distribution(dhat)

    diff = d - dhat
    total = np.maximum(d + dhat, EPS)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl_terms = np.where(d > 0, d * np.log(np.maximum(d, EPS) / np.maximum(dhat, EPS)), 0.0)
    norms = np.maximum(np.linalg.norm(d, axis=1) * np.linalg.norm(dhat, axis=1), EPS)
    return {
        "chebyshev": np.max(np.abs(diff), axis=1),
        "clark": np.sqrt(np.sum(diff**2 / total**2, axis=1)),
        "canberra": np.sum(np.abs(diff) / total, axis=1),
        "kl": np.sum(kl_terms, axis=1),
        "cosine": np.sum(d * dhat, axis=1) / norms,
        "intersection": np.sum(np.minimum(d, dhat), axis=1),
    }


@dataclass
class MetricReport:
    """Mean and population standard deviation of each measure over samples."""

    mean: dict
    std: dict
    per_sample: dict = field(repr=False, default_factory=dict)

    def __getattr__(self, name):
        if name in METRICS:
            return self.mean[name]
        raise AttributeError(name)

    @property
    def count(self):
        return len(next(iter(self.per_sample.values()))) if self.per_sample else 0

    def as_dict(self):
        return {name: {"mean": float(self.mean[name]), "std": float(self.std[name])} for name in METRICS}

    def format_row(self, digits=4):
        return "  ".join(f"{name}={self.mean[name]:.{digits}f}±{self.std[name]:.{digits}f}" for name in METRICS)


def evaluate_batch(truths, predictions):
    truths = np.asarray(truths, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if truths.ndim != 2 or truths.shape[0] == 0:
        raise ValueError("need a non-empty (m, c) batch of distributions")
    values = pairwise_metrics(truths, predictions)
    return MetricReport(
        mean={k: float(v.mean()) for k, v in values.items()},
        std={k: float(v.std()) for k, v in values.items()},
        per_sample=values,
    )


def evaluate(d, dhat):
    """All six measures for a single pair of distributions."""
    d = np.asarray(d, dtype=np.float64)
    dhat = np.asarray(dhat, dtype=np.float64)
    if d.ndim != 1 or d.shape != dhat.shape:
        raise ValueError(f"expected two vectors of equal length, got {d.shape} and {dhat.shape}")
    return evaluate_batch(d[None], dhat[None])
