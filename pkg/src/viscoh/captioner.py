"""Select one class-level description per cluster from member captions.

The objective for a candidate caption is its mean distance to the other
captions of its class minus its mean distance to all captions outside the
class; the argmin is the caption that is typical for the class yet
distinctive against the rest of the corpus.  In cosine mode the means come
from an exact sum-vector identity (mean distance to a set T is
``1 - u_s . sum(T)/|T|`` for unit vectors), so scoring all N candidates
costs O(N * dim) instead of the O(N^2 * dim) double loop.  ROUGE-L mode
runs the explicit double loop on word level through the kernel backend.

As printed, the intra mean divides by |S_c| while summing over the
|S_c| - 1 other members; `intra_excludes_self=True` divides by |S_c| - 1
instead.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .corpus import CaptionSet, Clustering, EmbeddingMatrix
from .stopwords import STOPWORDS

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class CaptionerError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


def rouge_l_f1(a: str, b: str) -> float:
    """ROUGE-L F1: R = LCS/|a|, P = LCS/|b|, F1 = 2PR/(P+R); 0 if no overlap."""
    ta, tb = tokenize(a), tokenize(b)
    if not ta or not tb:
        return 0.0
    vocab: dict[str, int] = {}
    ia = np.array([vocab.setdefault(t, len(vocab)) for t in ta], dtype=np.int32)
    ib = np.array([vocab.setdefault(t, len(vocab)) for t in tb], dtype=np.int32)
    lcs = _kernels.lcs_length(ia, ib)
    if lcs == 0:
        return 0.0
    recall = lcs / len(ta)
    precision = lcs / len(tb)
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class UnitEmbeddingIndex:
    """Unit caption vectors plus the per-class and global sums."""

    ids: tuple[str, ...]               # caption owners, sorted
    unit: np.ndarray                   # (N, dim) float64, rows unit-norm
    class_of: np.ndarray               # (N,) int64
    class_rows: dict[int, np.ndarray]  # cluster -> row indices (sorted ids)
    class_sums: dict[int, np.ndarray]
    global_sum: np.ndarray

    @property
    def total(self) -> int:
        return len(self.ids)


def build_index(caption_set: CaptionSet, caption_embeddings: EmbeddingMatrix,
                clustering: Clustering) -> UnitEmbeddingIndex:
    ids = sorted(set(caption_set.captions) & set(clustering.assignment))
    if not ids:
        raise CaptionerError("no clustered captions")
    missing = [i for i in ids if not caption_embeddings.has(i)]
    if missing:
        raise CaptionerError(f"no caption embedding for {missing[0]!r}")
    vectors = caption_embeddings.take(ids)
    norms = np.linalg.norm(vectors, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise CaptionerError(f"zero-norm caption embedding for {ids[int(zero[0])]!r}")
    unit = vectors / norms[:, None]
    class_of = np.array([clustering.assignment[i] for i in ids], dtype=np.int64)
    class_rows = {int(c): np.flatnonzero(class_of == c)
                  for c in np.unique(class_of)}
    class_sums = {c: unit[rows].sum(axis=0) for c, rows in class_rows.items()}
    global_sum = unit.sum(axis=0)
    return UnitEmbeddingIndex(ids=tuple(ids), unit=unit, class_of=class_of,
                              class_rows=class_rows, class_sums=class_sums,
                              global_sum=global_sum)


@dataclass(frozen=True)
class Description:
    cluster_id: int
    text: str
    source_image_id: str
    score: float
    intra: float
    inter: float
    flags: tuple[str, ...] = ()

    def to_doc(self) -> dict:
        doc = {
            "cluster_id": self.cluster_id,
            "text": self.text,
            "source_image_id": self.source_image_id,
            "score": self.score,
            "intra": self.intra,
            "inter": self.inter,
        }
        if self.flags:
            doc["flags"] = list(self.flags)
        return doc


@dataclass(frozen=True)
class DescriptionSet:
    by_class: dict[int, Description]

    def texts(self) -> dict[int, str]:
        return {c: d.text for c, d in self.by_class.items()}


def cosine_candidate_scores(index: UnitEmbeddingIndex, cluster_id: int,
                            use_negative_term: bool = True,
                            intra_excludes_self: bool = False):
    """(intra, inter, score) per member caption via the sum-vector identity."""
    rows = index.class_rows.get(cluster_id)
    if rows is None or rows.size == 0:
        raise CaptionerError(f"cluster {cluster_id} has no captions")
    n_class = rows.size
    n_total = index.total
    u = index.unit[rows]
    class_sum = index.class_sums[cluster_id]
    flags: list[str] = []

    if n_class == 1:
        intra = np.zeros(1)
        flags.append("singleton_intra")
    else:
        denom = (n_class - 1) if intra_excludes_self else n_class
        intra = ((n_class - 1) - u @ class_sum + 1.0) / denom
        # u . (class_sum - u_s) = u . class_sum - 1 for unit rows

    n_out = n_total - n_class
    if n_out == 0:
        inter = np.zeros(n_class)
        flags.append("no_negatives")
    else:
        inter = (n_out - u @ (index.global_sum - class_sum)) / n_out

    score = intra - inter if use_negative_term else intra.copy()
    return intra, inter, score, tuple(flags)


def _rouge_distance_block(token_ids: list[np.ndarray], rows: np.ndarray) -> np.ndarray:
    """Distances 1 - F1 between class member captions (rows) and all captions."""
    flat_all, off_all = _kernels.flatten_token_rows(token_ids)
    members = [token_ids[i] for i in rows]
    flat_m, off_m = _kernels.flatten_token_rows(members)
    return 1.0 - _kernels.rouge_f1_block(flat_m, off_m, flat_all, off_all)


def rouge_candidate_scores(token_ids: list[np.ndarray], class_rows: dict[int, np.ndarray],
                           cluster_id: int, n_total: int,
                           use_negative_term: bool = True,
                           intra_excludes_self: bool = False):
    rows = class_rows.get(cluster_id)
    if rows is None or rows.size == 0:
        raise CaptionerError(f"cluster {cluster_id} has no captions")
    n_class = rows.size
    dist = _rouge_distance_block(token_ids, rows)
    flags: list[str] = []
    in_class = dist[:, rows]
    self_dist = np.diagonal(in_class).copy()  # member i is column i of its own block
    if n_class == 1:
        intra = np.zeros(1)
        flags.append("singleton_intra")
    else:
        denom = (n_class - 1) if intra_excludes_self else n_class
        intra = (in_class.sum(axis=1) - self_dist) / denom
    n_out = n_total - n_class
    if n_out == 0:
        inter = np.zeros(n_class)
        flags.append("no_negatives")
    else:
        inter = (dist.sum(axis=1) - in_class.sum(axis=1)) / n_out
    score = intra - inter if use_negative_term else intra.copy()
    return intra, inter, score, tuple(flags)


def select_descriptions(clustering: Clustering, caption_set: CaptionSet,
                        mode: str = "cosine",
                        caption_embeddings: EmbeddingMatrix | None = None,
                        use_negative_term: bool = True,
                        intra_excludes_self: bool = False) -> DescriptionSet:
    """Pick the objective-minimizing caption per cluster.

    Ties break to the lexicographically smallest image id (ids are scanned
    in sorted order, so the first minimum wins).
    """
    if mode not in ("cosine", "rouge"):
        raise CaptionerError(f"unknown distance mode {mode!r}")
    clustered = sorted(set(clustering.assignment))
    missing = [i for i in clustered if i not in caption_set.captions]
    if missing:
        raise CaptionerError(f"no caption for clustered image {missing[0]!r}")

    if mode == "cosine":
        if caption_embeddings is None:
            raise CaptionerError("cosine mode requires caption embeddings")
        index = build_index(caption_set, caption_embeddings, clustering)
        ids = index.ids
        class_rows = index.class_rows
    else:
        ids = tuple(clustered)
        class_of = np.array([clustering.assignment[i] for i in ids], dtype=np.int64)
        class_rows = {int(c): np.flatnonzero(class_of == c)
                      for c in np.unique(class_of)}
        vocab: dict[str, int] = {}
        token_ids = []
        for image_id in ids:
            tokens = tokenize(caption_set.captions[image_id])
            token_ids.append(np.array([vocab.setdefault(t, len(vocab)) for t in tokens],
                                      dtype=np.int32))

    by_class: dict[int, Description] = {}
    for cluster_id in sorted(class_rows):
        rows = class_rows[cluster_id]
        if mode == "cosine":
            intra, inter, score, flags = cosine_candidate_scores(
                index, cluster_id, use_negative_term, intra_excludes_self)
        else:
            intra, inter, score, flags = rouge_candidate_scores(
                token_ids, class_rows, cluster_id, len(ids),
                use_negative_term, intra_excludes_self)
        best = int(np.argmin(score))
        image_id = ids[int(rows[best])]
        by_class[cluster_id] = Description(
            cluster_id=cluster_id,
            text=caption_set.captions[image_id],
            source_image_id=image_id,
            score=float(score[best]),
            intra=float(intra[best]),
            inter=float(inter[best]),
            flags=flags,
        )
    return DescriptionSet(by_class=by_class)


def write_descriptions(descriptions: DescriptionSet, path: str | Path,
                       provenance: dict | None = None) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        if provenance is not None:
            fh.write(json.dumps({"type": "meta", "provenance": provenance},
                                sort_keys=True) + "\n")
        for cluster_id in sorted(descriptions.by_class):
            fh.write(json.dumps(descriptions.by_class[cluster_id].to_doc(),
                                sort_keys=True) + "\n")


def load_descriptions(path: str | Path) -> DescriptionSet:
    by_class: dict[int, Description] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            if doc.get("type") == "meta":
                continue
            desc = Description(
                cluster_id=int(doc["cluster_id"]),
                text=doc["text"],
                source_image_id=doc["source_image_id"],
                score=float(doc["score"]),
                intra=float(doc["intra"]),
                inter=float(doc["inter"]),
                flags=tuple(doc.get("flags", [])),
            )
            by_class[desc.cluster_id] = desc
    return DescriptionSet(by_class=by_class)


def uniqueness_stats(descriptions: DescriptionSet, stopword_list=STOPWORDS,
                     top_n: int = 10) -> dict:
    """Uniqueness counts and the most frequent descriptions.

    `unique_without_stopwords` compares captions after dropping stopword
    tokens, mirroring how near-identical phrasings collapse.
    """
    texts = [descriptions.by_class[c].text for c in sorted(descriptions.by_class)]
    stripped = [" ".join(t for t in tokenize(text) if t not in stopword_list)
                for text in texts]
    counts: dict[str, int] = {}
    for text in texts:
        counts[text] = counts.get(text, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return {
        "num_classes": len(texts),
        "unique": len(set(texts)),
        "unique_without_stopwords": len(set(stripped)),
        "top": [{"text": text, "count": count} for text, count in ranked[:top_n]],
    }
