"""Pure numpy/Python fallback for the compiled kernels.

Kept semantically identical to the Cython backend (same formulas, same tie
rules); only speed differs.
"""

from __future__ import annotations

import numpy as np


def lcs_length(a, b) -> int:
    na, nb = len(a), len(b)
    if na == 0 or nb == 0:
        return 0
    prev = [0] * (nb + 1)
    for i in range(na):
        cur = [0] * (nb + 1)
        ai = a[i]
        for j in range(nb):
            if ai == b[j]:
                cur[j + 1] = prev[j] + 1
            elif prev[j + 1] >= cur[j]:
                cur[j + 1] = prev[j + 1]
            else:
                cur[j + 1] = cur[j]
        prev = cur
    return prev[nb]


def rouge_f1_block(flat_a, off_a, flat_b, off_b) -> np.ndarray:
    na = len(off_a) - 1
    nb = len(off_b) - 1
    out = np.zeros((na, nb), dtype=np.float64)
    rows_a = [flat_a[off_a[i]:off_a[i + 1]] for i in range(na)]
    rows_b = [flat_b[off_b[j]:off_b[j + 1]] for j in range(nb)]
    for i in range(na):
        ta = rows_a[i]
        la = len(ta)
        for j in range(nb):
            tb = rows_b[j]
            lb = len(tb)
            if la == 0 or lb == 0:
                continue
            lcs = lcs_length(ta, tb)
            if lcs == 0:
                continue
            recall = lcs / la
            precision = lcs / lb
            out[i, j] = 2.0 * precision * recall / (precision + recall)
    return out


def assign_points(X: np.ndarray, C: np.ndarray):
    """Nearest centroid per point by squared Euclidean distance.

    Distances are computed as sum((x - c)^2) per centroid (no gram-matrix
    expansion) to match the compiled backend; strict `<` keeps the smallest
    centroid index on ties.
    """
    n = X.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    best = np.full(n, np.inf, dtype=np.float64)
    for j in range(C.shape[0]):
        diff = X - C[j]
        d = np.einsum("nd,nd->n", diff, diff)
        better = d < best
        labels[better] = j
        best[better] = d[better]
    return labels, best


def distance_rowsums(X: np.ndarray) -> np.ndarray:
    n = X.shape[0]
    out = np.zeros(n, dtype=np.float64)
    for i in range(n):
        diff = X - X[i]
        out[i] = np.sqrt(np.einsum("nd,nd->n", diff, diff)).sum()
    return out
