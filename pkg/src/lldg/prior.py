"""Label-difference matrices and the Gaussian prior grids built from them."""
from dataclasses import dataclass

import numpy as np

__all__ = [
    "check_distribution",
    "difference_matrix",
    "prior_scale",
    "sample_prior_grid",
    "sample_prior_grids",
    "sample_seed",
    "PriorGrid",
]

SIMPLEX_TOL = 1e-6


def check_distribution(l, tol=SIMPLEX_TOL):
    """Validate one label distribution (or a stack of them) and return it."""
    l = np.asarray(l, dtype=np.float64)
    if l.ndim < 1 or l.shape[-1] < 1:
        raise ValueError(f"label distribution must be a non-empty vector, got shape {l.shape}")
    if not np.all(np.isfinite(l)):
        raise ValueError("label distribution contains non-finite entries")
    if np.any(l < -tol):
        raise ValueError("label distribution has negative entries")
    if np.any(np.abs(l.sum(axis=-1) - 1.0) > tol):
        raise ValueError("label distribution does not sum to 1")
    return l


def difference_matrix(l):
    """Pairwise label differences ``D[i, j] = l[j] - l[i]``.

    Works on a single distribution of length ``c`` or a batch ``(m, c)``.
    """
    l = check_distribution(l)
    return l[..., None, :] - l[..., :, None]


def prior_scale(d, variance_mode="variance"):
    """Standard deviation used for each entry of a difference matrix.

    ``1 - |a|`` is read as the variance by default; ``variance_mode="std"``
    uses it directly as the standard deviation.
    """
    spread = np.maximum(0.0, 1.0 - np.abs(d))
    if variance_mode == "variance":
        return np.sqrt(spread)
    if variance_mode == "std":
        return spread
    raise ValueError(f"variance_mode must be 'variance' or 'std', got {variance_mode!r}")


@dataclass(frozen=True)
class PriorGrid:
    grid: np.ndarray
    seed: object


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_prior_grids(d, rng, variance_mode="variance"):
    """Draw prior grids for a stack of difference matrices.

    ``d`` has shape ``(..., c, c)``; the result has shape ``(..., c, c, c)``
    where the last axis holds ``c`` independent normal draws with mean
    ``d[..., i, j]`` and the scale from :func:`prior_scale`.
    """
    d = np.asarray(d, dtype=np.float64)
    c = d.shape[-1]
    scale = prior_scale(d, variance_mode)[..., None]
    noise = _rng(rng).standard_normal(d.shape + (c,))
    return d[..., None] + scale * noise


def sample_prior_grid(d, seed, variance_mode="variance"):
    """Sample the ``c x c x c`` prior grid for one difference matrix."""
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"expected a square difference matrix, got shape {d.shape}")
    return PriorGrid(sample_prior_grids(d, _rng(seed), variance_mode), seed)


def sample_seed(global_seed, sample_index):
    """Per-sample seed for independent, order-free prior draws."""
    return int(global_seed) ^ int(sample_index)
