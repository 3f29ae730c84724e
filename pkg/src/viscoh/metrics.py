"""Cluster quality metrics: label purity, partition comparison, centroids.

Entropy is natural-log throughout.  Purity of a cluster is
``1 - H(label histogram) / ln(L)`` with L the number of labels in the label
map, so a single-label cluster scores 1 and a label-uniform cluster scores 0.
Partition comparison returns NMI (sqrt normalization), AMI (arithmetic-mean
normalization, hypergeometric expected MI) and the adjusted Rand index; when
a normalizer degenerates to zero the convention is 1 for identical
partitions, else 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .corpus import Clustering, EmbeddingMatrix, LabelMap


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ClusterPurity:
    purity: float | None  # None when the cluster has no labeled member
    label_counts: dict[int, int]
    size: int
    labeled: int


@dataclass(frozen=True)
class PurityReport:
    per_cluster: dict[int, ClusterPurity]
    normalizer: float  # ln(L)

    def scored(self) -> dict[int, float]:
        return {c: e.purity for c, e in self.per_cluster.items() if e.purity is not None}


def class_purity(clustering: Clustering, label_map: LabelMap) -> PurityReport:
    if not label_map.labels or label_map.num_labels == 0:
        raise MetricsError("empty label map")
    log_l = math.log(label_map.num_labels)
    per_cluster: dict[int, ClusterPurity] = {}
    for cluster_id, members in clustering.members().items():
        counts: dict[int, int] = {}
        for image_id in members:
            label = label_map.labels.get(image_id)
            if label is not None:
                counts[label] = counts.get(label, 0) + 1
        labeled = sum(counts.values())
        if labeled == 0:
            per_cluster[cluster_id] = ClusterPurity(None, counts, len(members), 0)
            continue
        entropy = 0.0
        for count in counts.values():
            p = count / labeled
            entropy -= p * math.log(p)
        purity = 1.0 if entropy == 0.0 else 1.0 - entropy / log_l
        per_cluster[cluster_id] = ClusterPurity(purity, counts, len(members), labeled)
    return PurityReport(per_cluster=per_cluster, normalizer=log_l)


class PartitionScores(NamedTuple):
    nmi: float
    ami: float
    ari: float


def _canonical_labels(clustering: Clustering, ids: list[str]) -> list[int]:
    dense: dict[int, int] = {}
    out = []
    for image_id in ids:
        c = clustering.assignment[image_id]
        if c not in dense:
            dense[c] = len(dense)
        out.append(dense[c])
    return out


def contingency_table(a: Clustering, b: Clustering) -> np.ndarray:
    """Joint counts n_ij over the shared id set; raises on id mismatch."""
    ids_a, ids_b = set(a.assignment), set(b.assignment)
    if ids_a != ids_b:
        only_a = sorted(ids_a - ids_b)[:3]
        only_b = sorted(ids_b - ids_a)[:3]
        raise MetricsError(f"id sets differ (e.g. only in A: {only_a}, only in B: {only_b})")
    ids = sorted(ids_a)
    la = _canonical_labels(a, ids)
    lb = _canonical_labels(b, ids)
    table = np.zeros((max(la) + 1, max(lb) + 1), dtype=np.int64)
    for i, j in zip(la, lb):
        table[i, j] += 1
    return table


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def mutual_information(table: np.ndarray) -> float:
    n = int(table.sum())
    ai = table.sum(axis=1)
    bj = table.sum(axis=0)
    mi = 0.0
    rows, cols = np.nonzero(table)
    for i, j in zip(rows, cols):
        nij = table[i, j]
        mi += (nij / n) * math.log(n * nij / (ai[i] * bj[j]))
    return mi


def expected_mutual_information(ai: np.ndarray, bj: np.ndarray, n: int) -> float:
    """E[MI] over the hypergeometric (fixed-marginal permutation) model.

    Vectorized over all (i, j, n_ij) triples; at K=3000 the triple loop is
    far too slow in Python.
    """
    a = np.asarray(ai, dtype=np.int64)
    b = np.asarray(bj, dtype=np.int64)
    if a.shape[0] * b.shape[0] <= 64:  # numpy setup costs dominate tiny tables
        lg = math.lgamma
        emi = 0.0
        for av in a.tolist():
            for bv in b.tolist():
                for nij in range(max(1, av + bv - n), min(av, bv) + 1):
                    log_w = (lg(av + 1) + lg(bv + 1) + lg(n - av + 1)
                             + lg(n - bv + 1) - lg(n + 1) - lg(nij + 1)
                             - lg(av - nij + 1) - lg(bv - nij + 1)
                             - lg(n - av - bv + nij + 1))
                    emi += (nij / n) * math.log(n * nij / (av * bv)) * math.exp(log_w)
        return emi
    pair_a = np.repeat(a, b.shape[0])
    pair_b = np.tile(b, a.shape[0])
    lo = np.maximum(1, pair_a + pair_b - n)
    hi = np.minimum(pair_a, pair_b)
    counts = hi - lo + 1  # every pair has lo <= hi since marginals are >= 1
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    total = int(counts.sum())
    flat_a = np.repeat(pair_a, counts).astype(np.float64)
    flat_b = np.repeat(pair_b, counts).astype(np.float64)
    nij = (np.arange(total) - np.repeat(offsets, counts)
           + np.repeat(lo, counts)).astype(np.float64)
    log_w = (gammaln(flat_a + 1) + gammaln(flat_b + 1)
             + gammaln(n - flat_a + 1) + gammaln(n - flat_b + 1)
             - gammaln(n + 1) - gammaln(nij + 1)
             - gammaln(flat_a - nij + 1) - gammaln(flat_b - nij + 1)
             - gammaln(n - flat_a - flat_b + nij + 1))
    terms = (nij / n) * (np.log(n * nij) - np.log(flat_a * flat_b)) * np.exp(log_w)
    return float(terms.sum())


def scores_from_table(table: np.ndarray, identical: bool) -> PartitionScores:
    n = int(table.sum())
    ai = table.sum(axis=1)
    bj = table.sum(axis=0)
    h_a = _entropy(ai, n)
    h_b = _entropy(bj, n)
    mi = mutual_information(table)

    def degenerate() -> float:
        return 1.0 if identical else 0.0

    denom_nmi = math.sqrt(h_a * h_b)
    nmi = degenerate() if denom_nmi == 0.0 else mi / denom_nmi

    emi = expected_mutual_information(ai, bj, n)
    denom_ami = 0.5 * (h_a + h_b) - emi
    ami = degenerate() if denom_ami == 0.0 else (mi - emi) / denom_ami

    def comb2(x: np.ndarray) -> float:
        return float((x * (x - 1) // 2).sum())

    index = comb2(table.ravel())
    sum_a = comb2(ai)
    sum_b = comb2(bj)
    total_pairs = n * (n - 1) / 2
    expected = sum_a * sum_b / total_pairs if total_pairs else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    denom_ari = max_index - expected
    ari = degenerate() if denom_ari == 0.0 else (index - expected) / denom_ari
    return PartitionScores(nmi=nmi, ami=ami, ari=ari)


def compare_clusterings(a: Clustering, b: Clustering) -> PartitionScores:
    table = contingency_table(a, b)
    ids = sorted(a.assignment)
    identical = _canonical_labels(a, ids) == _canonical_labels(b, ids)
    return scores_from_table(table, identical)


@dataclass(frozen=True)
class CentroidMap:
    cluster_ids: tuple[int, ...]
    centroids: np.ndarray  # (K, dim) float64, row order matches cluster_ids
    hard_negative: dict[int, int]

    def centroid(self, cluster_id: int) -> np.ndarray:
        return self.centroids[self.cluster_ids.index(cluster_id)]


def centroids_and_hard_negatives(clustering: Clustering,
                                 embeddings: EmbeddingMatrix) -> CentroidMap:
    """Per-cluster mean feature vector and the nearest other cluster.

    The hard negative of c is argmin over c' != c of the Euclidean distance
    between centroids, ties to the smallest cluster id.
    """
    members = clustering.members()
    cluster_ids = tuple(sorted(members))
    if len(cluster_ids) < 2:
        raise MetricsError("hard negatives need at least 2 clusters")
    dim = embeddings.dim
    centroids = np.zeros((len(cluster_ids), dim), dtype=np.float64)
    for row, cluster_id in enumerate(cluster_ids):
        centroids[row] = embeddings.take(members[cluster_id]).mean(axis=0)
    diffs = centroids[:, None, :] - centroids[None, :, :]
    dist = np.sqrt((diffs * diffs).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    nearest = dist.argmin(axis=1)  # first occurrence -> smallest cluster id on ties
    hard = {cluster_ids[i]: cluster_ids[int(nearest[i])] for i in range(len(cluster_ids))}
    return CentroidMap(cluster_ids=cluster_ids, centroids=centroids, hard_negative=hard)


def representative_image(cluster_id: int, clustering: Clustering,
                         embeddings: EmbeddingMatrix) -> str:
    """Medoid: member minimizing mean distance to the other members.

    Members are scanned in lexicographic id order, so argmin's
    first-occurrence rule breaks ties toward the smallest id.
    """
    members = clustering.members().get(cluster_id)
    if not members:
        raise MetricsError(f"cluster {cluster_id} is empty or unknown")
    if len(members) == 1:
        return members[0]
    rows = embeddings.take(members)
    sums = _kernels.distance_rowsums(rows)
    return members[int(np.argmin(sums))]
