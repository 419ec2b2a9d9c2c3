"""Truncate a grid at several Tucker ranks and compare against the HOSVD bound."""
import numpy as np

from lldg import tucker_decompose, tucker_reconstruct
from lldg.tensor import frobenius
from lldg.tucker import effective_ranks, hosvd_error_bound

rng = np.random.default_rng(3)
# low-rank signal plus a little noise
core = rng.standard_normal((2, 2, 2))
u, v, w = (np.linalg.qr(rng.standard_normal((6, 2)))[0] for _ in range(3))
t = np.einsum("abc,ia,jb,kc->ijk", core, u, v, w) + 0.01 * rng.standard_normal((6, 6, 6))

print("effective ranks at 99% energy:", [int(r) for r in effective_ranks(t)])
print(f"{'ranks':<12}{'error':>10}{'bound':>10}{'hooi':>10}")
for r in (1, 2, 3, 6):
    ranks = (r, r, r)
    err = frobenius(t - tucker_reconstruct(tucker_decompose(t, ranks)))
    hooi = frobenius(t - tucker_reconstruct(tucker_decompose(t, ranks, hooi_sweeps=5)))
    print(f"{str(ranks):<12}{err:>10.4f}{hosvd_error_bound(t, ranks):>10.4f}{hooi:>10.4f}")
