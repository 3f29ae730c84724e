"""Automated describability proxy over externally retrieved images.

Each class's description was used to retrieve N images; every retrieved
image comes with a probability vector over the K unsupervised classes from
an external classifier.  Top-k asks whether the source class ranks among
the k most probable classes; the binary test mirrors the human forced
choice by comparing the class-c probability of a retrieved positive against
that of a randomly drawn negative retrieved for some other class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import Rng


class RetrievalError(ValueError):
    pass


@dataclass(frozen=True)
class RetrievalSet:
    num_classes: int
    per_class: dict[int, list[tuple[str, np.ndarray]]]  # class -> [(image_id, probs)]

    @property
    def images_per_class(self) -> int:
        return len(next(iter(self.per_class.values())))


def load_retrieval(path: str | Path, tol: float = 1e-6) -> RetrievalSet:
    """JSONL ``{"class_id":…, "image_id":…, "probs":[…]}``; probs sum to 1."""
    path = Path(path)
    per_class: dict[int, list[tuple[str, np.ndarray]]] = {}
    k = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                class_id = int(doc["class_id"])
                image_id = doc["image_id"]
                probs = np.asarray(doc["probs"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise RetrievalError(f"{path.name}:{lineno}: malformed record") from None
            if probs.ndim != 1:
                raise RetrievalError(f"{path.name}:{lineno}: probs must be a flat list")
            if k is None:
                k = probs.shape[0]
            elif probs.shape[0] != k:
                raise RetrievalError(
                    f"{path.name}:{lineno}: probs length {probs.shape[0]} != {k}")
            if not np.isfinite(probs).all():
                raise RetrievalError(f"{path.name}:{lineno}: non-finite probability")
            if abs(float(probs.sum()) - 1.0) > tol:
                raise RetrievalError(
                    f"{path.name}:{lineno}: probabilities sum to {probs.sum():.8f}")
            per_class.setdefault(class_id, []).append((image_id, probs))
    if not per_class:
        raise RetrievalError(f"{path.name}: empty retrieval file")
    sizes = {len(v) for v in per_class.values()}
    if len(sizes) != 1:
        raise RetrievalError(f"retrieved-image counts differ across classes: {sorted(sizes)}")
    bad = [c for c in per_class if not 0 <= c < k]
    if bad:
        raise RetrievalError(f"class ids outside the probability vector: {sorted(bad)[:5]}")
    return RetrievalSet(num_classes=k, per_class=per_class)


def build_retrieval(records: list[tuple[int, str, np.ndarray]],
                    num_classes: int) -> RetrievalSet:
    per_class: dict[int, list[tuple[str, np.ndarray]]] = {}
    for class_id, image_id, probs in records:
        per_class.setdefault(class_id, []).append((image_id, np.asarray(probs, float)))
    return RetrievalSet(num_classes=num_classes, per_class=per_class)


def write_retrieval(retrieval: RetrievalSet, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for class_id in sorted(retrieval.per_class):
            for image_id, probs in retrieval.per_class[class_id]:
                fh.write(json.dumps(
                    {"class_id": class_id, "image_id": image_id,
                     "probs": [float(p) for p in probs]}, sort_keys=True) + "\n")


def topk_accuracy(retrieval: RetrievalSet, k: int,
                  class_subset: set[int] | None = None) -> float:
    """Fraction of retrieved images whose source class ranks in the top k.

    Ranking sorts by descending probability with ties broken toward the
    smaller class id; restricting to a class subset gives recall (R@k).
    """
    if k < 1:
        raise RetrievalError("k must be >= 1")
    if k > retrieval.num_classes:
        raise RetrievalError(f"k={k} exceeds {retrieval.num_classes} classes")
    if class_subset is not None:
        unknown = class_subset - set(retrieval.per_class)
        if unknown:
            raise RetrievalError(f"subset classes not present: {sorted(unknown)[:5]}")
    hits = total = 0
    for class_id in sorted(retrieval.per_class):
        if class_subset is not None and class_id not in class_subset:
            continue
        for _, probs in retrieval.per_class[class_id]:
            # stable sort on class id after negated probability = tie to smaller id
            order = np.lexsort((np.arange(probs.shape[0]), -probs))
            if class_id in order[:k]:
                hits += 1
            total += 1
    if total == 0:
        raise RetrievalError("no retrieved images in the selected subset")
    return hits / total


def binary_preference(retrieval: RetrievalSet, seed: int,
                      trials_per_positive: int = 1) -> float:
    """Positive-vs-sampled-negative comparison on the source class column.

    For each image retrieved for class c, draw a negative uniformly from the
    images retrieved for other classes and compare class-c probabilities;
    ties count as incorrect.
    """
    classes = sorted(retrieval.per_class)
    if len(classes) < 2:
        raise RetrievalError("binary preference needs at least 2 classes")
    for class_id in classes:
        if not retrieval.per_class[class_id]:
            raise RetrievalError(f"class {class_id} has no retrieved images")
    rng = Rng(seed)
    correct = total = 0
    for class_id in classes:
        others: list[np.ndarray] = []
        for other in classes:
            if other != class_id:
                others.extend(probs for _, probs in retrieval.per_class[other])
        for _, probs in retrieval.per_class[class_id]:
            p_pos = probs[class_id]
            for _ in range(trials_per_positive):
                negative = others[rng.randbelow(len(others))]
                total += 1
                if p_pos > negative[class_id]:
                    correct += 1
    return correct / total
