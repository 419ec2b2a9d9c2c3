"""Tucker decomposition, reconstruction and the low-rank grid projector.

Factors are fitted by truncated HOSVD, optionally refined with a few HOOI
sweeps. Everything is batched over leading axes like :mod:`lldg.tensor`.
"""
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .tensor import as_grid, frobenius, mode_n_product, svd, unfold

__all__ = [
    "TuckerRanks",
    "TuckerFactors",
    "resolve_ranks",
    "default_ranks",
    "tucker_decompose",
    "tucker_reconstruct",
    "tucker_project",
    "hosvd_error_bound",
    "mode_singular_values",
    "effective_ranks",
]

MAX_HOOI_SWEEPS = 10


class TuckerRanks(NamedTuple):
    r1: int
    r2: int
    r3: int

    def validate(self, dims):
        for k, (r, d) in enumerate(zip(self, dims), start=1):
            if not 1 <= r <= d:
                raise ValueError(f"rank r{k}={r} must lie in [1, {d}]")
        return self


@dataclass(frozen=True)
class TuckerFactors:
    """Core tensor plus one factor matrix per mode.

    ``core`` has shape ``(..., r1, r2, r3)``; ``u``, ``v`` and ``w`` have
    shapes ``(..., d1, r1)``, ``(..., d2, r2)`` and ``(..., d3, r3)``.
    """

    core: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    @property
    def ranks(self):
        return TuckerRanks(*self.core.shape[-3:])

    @property
    def factors(self):
        return (self.u, self.v, self.w)


def default_ranks(c):
    r = math.ceil(c / 2)
    return TuckerRanks(r, r, r)


def resolve_ranks(ranks, dims):
    """Turn a user-facing rank setting into validated :class:`TuckerRanks`.

    Accepts ``None`` (default ``ceil(d/2)`` per mode), ``"full"``, an int
    applied to every mode, or a 3-sequence.
    """
    dims = tuple(int(d) for d in dims)
    if ranks is None:
        ranks = tuple(math.ceil(d / 2) for d in dims)
    elif isinstance(ranks, str):
        if ranks != "full":
            raise ValueError(f"unknown rank setting {ranks!r}")
        ranks = dims
    elif isinstance(ranks, (int, np.integer)):
        ranks = (int(ranks),) * 3
    ranks = TuckerRanks(*(int(r) for r in ranks))
    return ranks.validate(dims)


def _leading_left_vectors(m, r):
    # thin SVD only yields min(rows, cols) vectors; fall back to full U when short
    if r <= min(m.shape[-2:]):
        u, _, _ = svd(m)
    else:
        u, _, _ = np.linalg.svd(m, full_matrices=True)
    return u[..., :r]


def _fix_signs(f):
    # largest-magnitude entry of each column made non-negative
    idx = np.argmax(np.abs(f), axis=-2)[..., None, :]
    pivot = np.take_along_axis(f, idx, axis=-2)
    signs = np.where(pivot < 0, -1.0, 1.0)
    return f * signs


def _project_core(t, factors, skip=None):
    out = t
    for mode, f in enumerate(factors, start=1):
        if mode == skip:
            continue
        out = mode_n_product(out, np.swapaxes(f, -1, -2), mode)
    return out


def tucker_decompose(t, ranks, hooi_sweeps=0):
    """Fit a Tucker model of the given multilinear ranks to ``t``.

    Truncated HOSVD provides the factors; ``hooi_sweeps`` rounds of
    higher-order orthogonal iteration then refine them.
    """
    t = as_grid(t)
    ranks = resolve_ranks(ranks, t.shape[-3:])
    if not 0 <= hooi_sweeps <= MAX_HOOI_SWEEPS:
        raise ValueError(f"hooi_sweeps must lie in [0, {MAX_HOOI_SWEEPS}]")

    factors = [_leading_left_vectors(unfold(t, k), r) for k, r in zip((1, 2, 3), ranks)]
    for _ in range(hooi_sweeps):
        for k, r in zip((1, 2, 3), ranks):
            partial = _project_core(t, factors, skip=k)
            factors[k - 1] = _leading_left_vectors(unfold(partial, k), r)

    factors = [_fix_signs(f) for f in factors]
    core = _project_core(t, factors)
    return TuckerFactors(core, *factors)


def tucker_reconstruct(f):
    """Rebuild the full tensor ``core x1 u x2 v x3 w``."""
    core = np.asarray(f.core, dtype=np.float64)
    for k, mat in enumerate(f.factors, start=1):
        if mat.shape[-1] != core.shape[core.ndim - 3 + k - 1]:
            raise ValueError(
                f"factor {k} has {mat.shape[-1]} columns but core mode-{k} size is "
                f"{core.shape[core.ndim - 3 + k - 1]}"
            )
    out = core
    for k, mat in enumerate(f.factors, start=1):
        out = mode_n_product(out, mat, k)
    return out


def tucker_project(t, ranks, hooi_sweeps=0):
    """Low-rank approximation of ``t``: decompose then reconstruct."""
    return tucker_reconstruct(tucker_decompose(t, ranks, hooi_sweeps))


def mode_singular_values(t):
    """Singular values of the three unfoldings of ``t``, as a list."""
    t = as_grid(t)
    return [np.linalg.svd(unfold(t, k), compute_uv=False) for k in (1, 2, 3)]


def hosvd_error_bound(t, ranks):
    """Upper bound on the truncated-HOSVD reconstruction error.

    The squared error never exceeds the sum, over modes, of the squared
    mode singular values that the truncation discards.
    """
    t = as_grid(t)
    ranks = resolve_ranks(ranks, t.shape[-3:])
    total = 0.0
    for s, r in zip(mode_singular_values(t), ranks):
        total = total + np.sum(s[..., r:] ** 2, axis=-1)
    return np.sqrt(total)


def effective_ranks(t, energy=0.99):
    """Per-mode count of singular values needed to hold ``energy`` of the mass.

    A zero tensor has effective ranks ``(0, 0, 0)``.
    """
    out = []
    for s in mode_singular_values(t):
        sq = s**2
        total = sq.sum(axis=-1, keepdims=True)
        cum = np.cumsum(sq, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(total > 0, cum / np.where(total > 0, total, 1.0), 1.0)
        # relative slack keeps exact-rank tensors from picking up a roundoff mode
        count = np.sum(frac < energy - 1e-12, axis=-1) + 1
        out.append(np.where(total[..., 0] > 0, count, 0))
    return tuple(out)


def relative_error(t, approx):
    t = np.asarray(t, dtype=np.float64)
    denom = frobenius(t)
    return frobenius(t - approx) / np.where(denom > 0, denom, 1.0)
