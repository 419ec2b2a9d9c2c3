"""Independent reference implementations used by the tests.

Everything here is written with explicit Python loops over indices (or a
different numpy route than the library) so a shared bug cannot hide.
"""
import itertools
import math

import numpy as np


def unfold_loop(t, mode):
    """Mode-m unfolding (1-based mode), columns in ascending remaining-mode order."""
    dims = t.shape
    rest = [a for a in range(3) if a != mode - 1]
    out = np.zeros((dims[mode - 1], dims[rest[0]] * dims[rest[1]]))
    for idx in itertools.product(*(range(d) for d in dims)):
        col = idx[rest[0]] * dims[rest[1]] + idx[rest[1]]
        out[idx[mode - 1], col] = t[idx]
    return out


def mode_product_loop(t, m, mode):
    dims = list(t.shape)
    new = list(dims)
    new[mode - 1] = m.shape[0]
    out = np.zeros(new)
    for idx in itertools.product(*(range(d) for d in new)):
        s = 0.0
        for i in range(dims[mode - 1]):
            src = list(idx)
            src[mode - 1] = i
            s += m[idx[mode - 1], i] * t[tuple(src)]
        out[idx] = s
    return out


def tucker_sum(core, u, v, w):
    """y_ijt = sum over (r1, r2, r3) of g * u_i,r1 * v_j,r2 * w_t,r3."""
    r1, r2, r3 = core.shape
    out = np.zeros((u.shape[0], v.shape[0], w.shape[0]))
    for i in range(u.shape[0]):
        for j in range(v.shape[0]):
            for t in range(w.shape[0]):
                s = 0.0
                for a in range(r1):
                    for b in range(r2):
                        for c in range(r3):
                            s += core[a, b, c] * u[i, a] * v[j, b] * w[t, c]
                out[i, j, t] = s
    return out


def gram_singular_values(m):
    """Singular values from the eigenvalues of the smaller Gram matrix."""
    g = m @ m.T if m.shape[0] <= m.shape[1] else m.T @ m
    ev = np.linalg.eigvalsh(g)[::-1]
    return np.sqrt(np.clip(ev, 0.0, None))


def hosvd_bound_oracle(t, ranks):
    total = 0.0
    for mode, r in enumerate(ranks, start=1):
        s = gram_singular_values(unfold_loop(t, mode))
        total += float(np.sum(s[r:] ** 2))
    return math.sqrt(total)


def metrics_loop(d, dhat, eps=1e-12):
    c = len(d)
    cheb = max(abs(d[j] - dhat[j]) for j in range(c))
    clark = math.sqrt(sum((d[j] - dhat[j]) ** 2 / max(d[j] + dhat[j], eps) ** 2 for j in range(c)))
    canb = sum(abs(d[j] - dhat[j]) / max(d[j] + dhat[j], eps) for j in range(c))
    kl = sum(d[j] * math.log(max(d[j], eps) / max(dhat[j], eps)) for j in range(c) if d[j] > 0)
    dot = sum(d[j] * dhat[j] for j in range(c))
    nd = math.sqrt(sum(x * x for x in d))
    nh = math.sqrt(sum(x * x for x in dhat))
    cos = dot / max(nd * nh, eps)
    inter = sum(min(d[j], dhat[j]) for j in range(c))
    return {"chebyshev": cheb, "clark": clark, "canberra": canb, "kl": kl, "cosine": cos, "intersection": inter}


def loss_d_loop(lhat, l):
    lhat, l = np.atleast_2d(lhat), np.atleast_2d(l)
    total = 0.0
    for row_hat, row in zip(lhat, l):
        total += sum((a - b) ** 2 for a, b in zip(row_hat, row)) / len(row)
    return total / len(l)


def loss_g_loop(b, bhat):
    b, bhat = np.asarray(b), np.asarray(bhat)
    if b.ndim == 3:
        b, bhat = b[None], bhat[None]
    total = 0.0
    for g, h in zip(b, bhat):
        c = g.shape[0]
        s = 0.0
        for i, j, k in itertools.product(range(c), repeat=3):
            s += (g[i, j, k] - h[i, j, k]) ** 2
        total += s / c**3
    return total / len(b)


def grid_sum_loop(g):
    """sum over z, then over x: result indexed by y."""
    c = g.shape[0]
    return np.array([sum(g[i, j, k] for i in range(c) for k in range(c)) for j in range(c)])


def central_difference(f, x, h=1e-5, indices=None):
    """Numerical gradient of scalar ``f`` at array ``x`` (modified in place, then restored)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size) if indices is None else indices:
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def rel_error(a, b, floor=1e-8):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor)))
