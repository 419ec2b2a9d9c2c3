"""Dense multilinear primitives for third-order tensors.

Every function treats the last three axes of its input as the tensor modes
1, 2 and 3. Any leading axes are batch axes and are carried through
untouched, so a stack of grids with shape ``(batch, c, c, c)`` can be
processed in one call.

Unfolding convention: the mode-``m`` unfolding places the index along mode
``m`` on the rows and enumerates the two remaining modes lexicographically,
in ascending mode order, along the columns.
"""
import numpy as np

__all__ = [
    "as_grid",
    "unfold",
    "fold",
    "mode_n_product",
    "svd",
    "frobenius",
]

_MODES = (1, 2, 3)


def _check_mode(mode):
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    return mode


def as_grid(t):
    """Return ``t`` as a float64 array with at least three axes, all finite."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim < 3:
        raise ValueError(f"expected a third-order tensor, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValueError("tensor contains non-finite entries")
    return t


def _mode_axis(ndim, mode):
    return ndim - 3 + (mode - 1)


def unfold(t, mode):
    """Mode-``mode`` matricization of ``t``.

    Parameters
    ----------
    t : array_like, shape (..., d1, d2, d3)
    mode : {1, 2, 3}

    Returns
    -------
    ndarray, shape (..., d_mode, product of the other two dims)
    """
    _check_mode(mode)
    t = np.asarray(t)
    if t.ndim < 3:
        raise ValueError(f"expected a third-order tensor, got shape {t.shape}")
    axis = _mode_axis(t.ndim, mode)
    moved = np.moveaxis(t, axis, t.ndim - 3)
    return moved.reshape(t.shape[:-3] + (t.shape[axis], -1))


def fold(m, mode, dims):
    """Inverse of :func:`unfold` for the given ``mode`` and grid ``dims``."""
    _check_mode(mode)
    m = np.asarray(m)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3:
        raise ValueError(f"dims must have three entries, got {dims}")
    rest = [d for i, d in enumerate(dims) if i != mode - 1]
    if m.ndim < 2 or m.shape[-2:] != (dims[mode - 1], rest[0] * rest[1]):
        raise ValueError(
            f"matrix of shape {m.shape[-2:]} cannot fold into {dims} along mode {mode}"
        )
    batch = m.shape[:-2]
    full = m.reshape(batch + (dims[mode - 1], rest[0], rest[1]))
    return np.moveaxis(full, len(batch), len(batch) + mode - 1)


def mode_n_product(t, m, mode):
    """Multiply ``t`` by the matrix ``m`` along ``mode``.

    The result equals ``fold(m @ unfold(t, mode), mode, new_dims)`` where
    ``new_dims`` replaces ``dims[mode]`` with ``m.shape[-2]``. ``m`` may be a
    single matrix shared across the batch or a stack with one matrix per
    batch element.
    """
    _check_mode(mode)
    t = np.asarray(t, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if t.ndim < 3:
        raise ValueError(f"expected a third-order tensor, got shape {t.shape}")
    axis = _mode_axis(t.ndim, mode)
    if m.ndim < 2 or m.shape[-1] != t.shape[axis]:
        raise ValueError(
            f"matrix of shape {m.shape} does not match mode-{mode} size {t.shape[axis]}"
        )
    dims = list(t.shape[-3:])
    dims[mode - 1] = m.shape[-2]
    return fold(m @ unfold(t, mode), mode, dims)


def svd(m):
    """Thin singular value decomposition ``m = U @ diag(s) @ V.T``.

    Stacks of matrices are accepted. Singular values come back
    non-negative and sorted in descending order.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim < 2 or min(m.shape[-2:]) < 1:
        raise ValueError(f"expected a non-empty matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return u, s, np.swapaxes(vt, -1, -2)


def frobenius(t):
    """Frobenius norm over the last three axes."""
    t = np.asarray(t, dtype=np.float64)
    return np.sqrt(np.sum(t * t, axis=(-3, -2, -1)))
