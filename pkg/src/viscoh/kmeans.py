"""Lloyd's k-means with k-means++ seeding from the portable PRNG.

Deterministic under (embeddings, k, seed): seeding draws come from the
toolkit Rng (53-bit uniforms, inverse-CDF over the D^2 cumulative sums), the
assignment step ties toward the smallest centroid index, and empty clusters
are repaired by promoting the point farthest from its assigned centroid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .corpus import Clustering, EmbeddingMatrix, clustering_from_labels
from .rng import Rng


class KMeansError(ValueError):
    pass


@dataclass(frozen=True)
class KMeansResult:
    clustering: Clustering
    centroids: np.ndarray
    inertia: float
    n_iter: int
    inertia_history: tuple[float, ...]


def _plusplus_init(X: np.ndarray, k: int, rng: Rng) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]), dtype=np.float64)
    first = rng.randbelow(n)
    centers[0] = X[first]
    diff = X - centers[0]
    d2 = np.einsum("nd,nd->n", diff, diff)
    for i in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = rng.randbelow(n)  # all remaining mass at chosen points
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        centers[i] = X[idx]
        diff = X - centers[i]
        d2 = np.minimum(d2, np.einsum("nd,nd->n", diff, diff))
    return centers


def kmeans(embeddings: EmbeddingMatrix, k: int, seed: int,
           max_iter: int = 100, tol: float = 1e-6,
           normalize: bool = False) -> KMeansResult:
    """Cluster embedding rows into k groups; squared Euclidean objective.

    `normalize` L2-normalizes rows first (zero rows rejected).  Stops after
    `max_iter` iterations or when the relative inertia improvement drops
    below `tol`.
    """
    X = embeddings.values.astype(np.float64)
    n = X.shape[0]
    if k < 1:
        raise KMeansError("k must be >= 1")
    if k > n:
        raise KMeansError(f"k={k} exceeds {n} points")
    if normalize:
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        if (norms == 0).any():
            raise KMeansError("cannot L2-normalize zero rows")
        X = X / norms

    rng = Rng(seed)
    centers = _plusplus_init(X, k, rng)
    history: list[float] = []
    labels = np.zeros(n, dtype=np.int64)
    prev_inertia = np.inf
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        labels, sqd = _kernels.assign_points(X, centers)
        inertia = float(sqd.sum())
        history.append(inertia)

        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, X)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            # promote farthest points to seed the empty clusters
            order = np.argsort(-sqd, kind="stable")
            taken = 0
            for cluster in empty:
                idx = int(order[taken])
                taken += 1
                centers[cluster] = X[idx]
            nonempty = counts > 0
            centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        else:
            centers = sums / counts[:, None]

        if prev_inertia < np.inf:
            if prev_inertia == 0.0 or (prev_inertia - inertia) / prev_inertia < tol:
                break
        prev_inertia = inertia

    labels, sqd = _kernels.assign_points(X, centers)
    inertia = float(sqd.sum())
    clustering = clustering_from_labels(list(embeddings.ids), labels)
    return KMeansResult(clustering=clustering, centroids=centers, inertia=inertia,
                        n_iter=n_iter, inertia_history=tuple(history))
