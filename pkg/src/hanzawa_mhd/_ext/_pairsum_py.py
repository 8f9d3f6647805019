"""Blocked numpy fallback of the Gagliardo pair sum (same contract as the compiled kernel)."""
from __future__ import annotations

import numpy as np

BLOCK = 256


def pair_sum_rows(X, F, W, V, q, expo, i0, i1):
    X = np.asarray(X, float)
    F = np.asarray(F, float)
    W = np.asarray(W, float)
    V = np.asarray(V, float)
    total = 0.0
    for a in range(i0, i1, BLOCK):
        b = min(a + BLOCK, i1)
        r2 = np.sum((X[a:b, None, :] - X[None, :, :]) ** 2, axis=-1)
        acc = np.sum((F[a:b, None] - F[None]) ** 2, axis=-1)
        dq = np.einsum("ijg,g->ij", acc ** (0.5 * q), V)
        idx = np.arange(a, b)
        r2[idx - a, idx] = 0.0
        mask = r2 > 0.0
        safe = np.where(mask, r2, 1.0)
        row = np.where(mask, dq / safe ** (0.5 * expo), 0.0) @ W
        total += float(W[a:b] @ row)
    return total
