"""Independent oracles used to freeze expected values.

Each oracle is deliberately implemented from the defining formula with a
different technique than the production path (binomial-tail sums instead of
continued fractions, exact Fraction hypergeometric weights instead of
gammaln, explicit per-pair loops instead of the sum-vector identity), so
agreement is evidence rather than tautology.
"""

from __future__ import annotations

import math
from collections import Counter
from fractions import Fraction
from functools import lru_cache

import numpy as np


# --- incomplete beta / Clopper-Pearson ------------------------------------------

def incomplete_beta_series(a: int, b: int, x: float) -> float:
    """I_x(a, b) for integer a, b >= 1 as a binomial tail sum.

    I_x(a, b) = P(X >= a) for X ~ Binomial(a + b - 1, x); every term is
    non-negative, so no cancellation.  math.comb is exact.
    """
    n = a + b - 1
    total = 0.0
    for j in range(a, n + 1):
        total += math.comb(n, j) * (x ** j) * ((1.0 - x) ** (n - j))
    return total


def beta_quantile_series(p: float, a: int, b: int, tol: float = 1e-12) -> float:
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if incomplete_beta_series(a, b, mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def clopper_pearson_oracle(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    tail = (1.0 - level) / 2.0
    lo = 0.0 if k == 0 else beta_quantile_series(tail, k, n - k + 1)
    hi = 1.0 if k == n else beta_quantile_series(1.0 - tail, k + 1, n - k)
    return lo, hi


# --- partition comparison --------------------------------------------------------

def set_partitions(n: int):
    """All partitions of range(n) as dense first-appearance label tuples."""
    if n == 0:
        yield ()
        return
    labels = [0] * n

    def rec(i: int, max_label: int):
        if i == n:
            yield tuple(labels)
            return
        for lab in range(max_label + 2):
            labels[i] = lab
            yield from rec(i + 1, max(max_label, lab))

    yield from rec(1, 0)


def _canonical(labels) -> tuple:
    dense = {}
    return tuple(dense.setdefault(lab, len(dense)) for lab in labels)


@lru_cache(maxsize=None)
def expected_mi_exact(a_marginals: tuple, b_marginals: tuple, n: int) -> float:
    emi = 0.0
    for a in a_marginals:
        for b in b_marginals:
            for nij in range(max(1, a + b - n), min(a, b) + 1):
                weight = Fraction(math.comb(a, nij) * math.comb(n - a, b - nij),
                                  math.comb(n, b))
                emi += float(weight) * (nij / n) * math.log(n * nij / (a * b))
    return emi


def brute_partition_scores(la, lb) -> tuple[float, float, float]:
    """Definitional NMI / AMI / ARI for two label sequences."""
    n = len(la)
    ca, cb = Counter(la), Counter(lb)
    joint = Counter(zip(la, lb))

    def entropy(counter):
        return -sum((c / n) * math.log(c / n) for c in counter.values())

    h_a, h_b = entropy(ca), entropy(cb)
    mi = sum((nij / n) * math.log((nij / n) / ((ca[i] / n) * (cb[j] / n)))
             for (i, j), nij in joint.items())
    identical = _canonical(la) == _canonical(lb)

    def degenerate():
        return 1.0 if identical else 0.0

    denom = math.sqrt(h_a * h_b)
    nmi = degenerate() if denom == 0.0 else mi / denom

    # expected MI under fixed marginals: exact hypergeometric weights;
    # EMI is a function of the two marginal multisets only, so cache on them
    emi = expected_mi_exact(tuple(sorted(ca.values())),
                            tuple(sorted(cb.values())), n)
    denom_ami = 0.5 * (h_a + h_b) - emi
    ami = degenerate() if denom_ami == 0.0 else (mi - emi) / denom_ami

    # ARI by literal pair counting
    same_a = same_b = same_both = 0
    for i in range(n):
        for j in range(i + 1, n):
            in_a = la[i] == la[j]
            in_b = lb[i] == lb[j]
            same_a += in_a
            same_b += in_b
            same_both += in_a and in_b
    pairs = n * (n - 1) // 2
    expected = same_a * same_b / pairs if pairs else 0.0
    max_index = 0.5 * (same_a + same_b)
    denom_ari = max_index - expected
    ari = degenerate() if denom_ari == 0.0 else (same_both - expected) / denom_ari
    return nmi, ami, ari


# --- caption objective ------------------------------------------------------------

def naive_caption_scores(unit: np.ndarray, class_of: np.ndarray, cluster_id: int,
                         use_negative_term: bool = True,
                         intra_excludes_self: bool = False):
    """Per-candidate evaluation of the selection objective by explicit loops.

    Every pairwise cosine distance is materialized; only the per-candidate
    inner products are vectorized (a row matvec), which keeps the big
    performance-contrast instance feasible while remaining O(N^2 * dim).
    """
    rows = np.flatnonzero(class_of == cluster_id)
    others = np.flatnonzero(class_of != cluster_id)
    n_class = rows.size
    intra_out, inter_out, score_out = [], [], []
    for r in rows:
        u = unit[r]
        mates = rows[rows != r]
        if mates.size == 0:
            intra = 0.0
        else:
            dists = 1.0 - unit[mates] @ u
            denom = (n_class - 1) if intra_excludes_self else n_class
            intra = float(dists.sum()) / denom
        if others.size == 0:
            inter = 0.0
        else:
            inter = float((1.0 - unit[others] @ u).sum()) / others.size
        score = intra - inter if use_negative_term else intra
        intra_out.append(intra)
        inter_out.append(inter)
        score_out.append(score)
    return np.array(intra_out), np.array(inter_out), np.array(score_out)


def naive_pairwise_scores(unit: np.ndarray, class_of: np.ndarray,
                          use_negative_term: bool = True,
                          intra_excludes_self: bool = False,
                          chunk: int = 256) -> dict:
    """All clusters' candidate scores from explicit pairwise distance blocks.

    Same O(N^2 * dim) double-loop objective as naive_caption_scores, executed
    through chunked matmuls so the big performance-contrast instance stays
    tractable; every pairwise distance is still materialized.
    """
    n_total = unit.shape[0]
    out = {}
    for cluster in np.unique(class_of):
        rows = np.flatnonzero(class_of == cluster)
        n_class = rows.size
        n_out = n_total - n_class
        intra_sums = np.zeros(n_class)
        all_sums = np.zeros(n_class)
        self_dists = np.zeros(n_class)
        for start in range(0, n_class, chunk):
            block_rows = rows[start:start + chunk]
            dist = 1.0 - unit[block_rows] @ unit.T  # (chunk, N) pair distances
            all_sums[start:start + chunk] = dist.sum(axis=1)
            intra_block = dist[:, rows]
            intra_sums[start:start + chunk] = intra_block.sum(axis=1)
            self_dists[start:start + chunk] = dist[np.arange(block_rows.size),
                                                   block_rows]
        if n_class == 1:
            intra = np.zeros(1)
        else:
            denom = (n_class - 1) if intra_excludes_self else n_class
            intra = (intra_sums - self_dists) / denom
        inter = ((all_sums - intra_sums) / n_out if n_out else np.zeros(n_class))
        score = intra - inter if use_negative_term else intra.copy()
        out[int(cluster)] = (intra, inter, score)
    return out


def lcs_reference(a, b) -> int:
    """Full-table LCS, independent of the kernel's two-row rolling version."""
    na, nb = len(a), len(b)
    table = [[0] * (nb + 1) for _ in range(na + 1)]
    for i in range(1, na + 1):
        for j in range(1, nb + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[na][nb]


def naive_rouge_scores(token_rows, class_of, cluster_id: int,
                       use_negative_term: bool = True,
                       intra_excludes_self: bool = False):
    def f1(ta, tb) -> float:
        if not len(ta) or not len(tb):
            return 0.0
        lcs = lcs_reference(list(ta), list(tb))
        if lcs == 0:
            return 0.0
        r = lcs / len(ta)
        p = lcs / len(tb)
        return 2 * p * r / (p + r)

    rows = [i for i, c in enumerate(class_of) if c == cluster_id]
    others = [i for i, c in enumerate(class_of) if c != cluster_id]
    n_class = len(rows)
    out = []
    for r in rows:
        mates = [i for i in rows if i != r]
        denom = (n_class - 1) if intra_excludes_self else n_class
        intra = (sum(1.0 - f1(token_rows[r], token_rows[i]) for i in mates) / denom
                 if mates else 0.0)
        inter = (sum(1.0 - f1(token_rows[r], token_rows[i]) for i in others) / len(others)
                 if others else 0.0)
        out.append((intra, inter, intra - inter if use_negative_term else intra))
    return out


# --- misc -------------------------------------------------------------------------

def brute_medoid(ids, vectors: np.ndarray) -> str:
    best_id, best_sum = None, None
    for i, image_id in enumerate(ids):
        total = sum(float(np.linalg.norm(vectors[i] - vectors[j]))
                    for j in range(len(ids)) if j != i)
        if best_sum is None or total < best_sum or (total == best_sum
                                                    and image_id < best_id):
            best_id, best_sum = image_id, total
    return best_id


def binary_preference_exhaustive(per_class_probs: dict[int, list[np.ndarray]]) -> float:
    """Expectation of the binary test over all positive/negative pairings."""
    classes = sorted(per_class_probs)
    correct = 0
    total = 0
    for c in classes:
        negatives = [p for other in classes if other != c
                     for p in per_class_probs[other]]
        for probs in per_class_probs[c]:
            for neg in negatives:
                total += 1
                if probs[c] > neg[c]:
                    correct += 1
    return correct / total
