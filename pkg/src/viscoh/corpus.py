"""Data model and ingestion for externally produced study inputs.

Everything here is plain files: clustering CSV, label-map CSV pair, caption
JSONL, image manifest CSV, and the EMB1 binary embedding format (magic
``EMB1``, u32 LE row count, u32 LE dim, then rows*dim float32 LE row-major,
with a newline-delimited sidecar of ids in row order).

Loaded objects are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EMB1_MAGIC = b"EMB1"


class CorpusError(ValueError):
    """Malformed or inconsistent input file."""


@dataclass(frozen=True)
class ImageManifest:
    """Maps image ids to files under a single root directory."""

    root: Path
    paths: dict[str, str]

    def resolve(self, image_id: str) -> Path | None:
        rel = self.paths.get(image_id)
        if rel is None:
            return None
        return self.root / rel

    @property
    def ids(self) -> list[str]:
        return sorted(self.paths)


@dataclass(frozen=True)
class Clustering:
    """Assignment of image ids to dense, zero-based cluster ids.

    ``original_ids[c]`` retains the cluster token as it appeared in the
    source file; dense ids follow first-appearance order.
    """

    assignment: dict[str, int]
    num_clusters: int
    original_ids: tuple[str, ...]

    def members(self) -> dict[int, list[str]]:
        """Cluster id -> lexicographically sorted member ids."""
        out: dict[int, list[str]] = {c: [] for c in range(self.num_clusters)}
        for image_id in sorted(self.assignment):
            out[self.assignment[image_id]].append(image_id)
        return out

    @property
    def image_ids(self) -> list[str]:
        return sorted(self.assignment)


@dataclass(frozen=True)
class LabelMap:
    labels: dict[str, int]
    names: dict[int, str]

    @property
    def num_labels(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Row-major float32 matrix keyed by id; computation promotes to f64."""

    ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        index = {image_id: i for i, image_id in enumerate(self.ids)}
        object.__setattr__(self, "_index", index)

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    def row(self, image_id: str) -> np.ndarray:
        i = self._index.get(image_id)
        if i is None:
            raise CorpusError(f"no embedding for id {image_id!r}")
        return self.values[i]

    def has(self, image_id: str) -> bool:
        return image_id in self._index

    def take(self, image_ids: list[str]) -> np.ndarray:
        """Rows for the given ids, promoted to float64."""
        try:
            rows = [self._index[i] for i in image_ids]
        except KeyError as exc:
            raise CorpusError(f"no embedding for id {exc.args[0]!r}") from None
        return self.values[rows].astype(np.float64)


@dataclass(frozen=True)
class CaptionSet:
    captions: dict[str, str]

    def __len__(self) -> int:
        return len(self.captions)


@dataclass(frozen=True)
class CorpusBundle:
    manifest: ImageManifest | None = None
    clustering: Clustering | None = None
    label_map: LabelMap | None = None
    embeddings: EmbeddingMatrix | None = None
    caption_set: CaptionSet | None = None
    caption_embeddings: EmbeddingMatrix | None = None


@dataclass(frozen=True)
class ValidationIssue:
    severity: str  # "error" | "warning"
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[ValidationIssue, ...]
    summary: dict[str, int] = field(default_factory=dict)

    @property
    def errors(self) -> list[ValidationIssue]:
        return [i for i in self.issues if i.severity == "error"]

    @property
    def warnings(self) -> list[ValidationIssue]:
        return [i for i in self.issues if i.severity == "warning"]

    def to_json(self) -> str:
        doc = {
            "issues": [
                {"severity": i.severity, "code": i.code, "message": i.message}
                for i in self.issues
            ],
            "summary": self.summary,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _read_csv_rows(path: Path, expected_cols: int, has_header: bool):
    text = path.read_text(encoding="utf-8")
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if has_header and lineno == 1:
            continue
        parts = line.split(",")
        if len(parts) != expected_cols:
            raise CorpusError(
                f"{path.name}:{lineno}: expected {expected_cols} comma-separated "
                f"fields, got {len(parts)}"
            )
        rows.append((lineno, [p.strip() for p in parts]))
    return rows


def load_clustering(path: str | Path, has_header: bool = False) -> Clustering:
    """Read ``image_id,cluster_id`` CSV and densely re-index cluster ids.

    Dense ids follow first appearance order of the original cluster tokens,
    so any line permutation that keeps that order yields the same map.
    """
    path = Path(path)
    rows = _read_csv_rows(path, 2, has_header)
    if not rows:
        raise CorpusError(f"{path.name}: empty clustering file")
    assignment: dict[str, int] = {}
    dense: dict[str, int] = {}
    original: list[str] = []
    for lineno, (image_id, raw_cluster) in rows:
        if not image_id:
            raise CorpusError(f"{path.name}:{lineno}: empty image id")
        try:
            cluster_token = str(int(raw_cluster))
        except ValueError:
            raise CorpusError(
                f"{path.name}:{lineno}: cluster id {raw_cluster!r} is not an integer"
            ) from None
        if int(cluster_token) < 0:
            raise CorpusError(f"{path.name}:{lineno}: negative cluster id {raw_cluster}")
        if image_id in assignment:
            raise CorpusError(f"{path.name}:{lineno}: duplicate image id {image_id!r}")
        if cluster_token not in dense:
            dense[cluster_token] = len(original)
            original.append(cluster_token)
        assignment[image_id] = dense[cluster_token]
    return Clustering(assignment=assignment, num_clusters=len(original),
                      original_ids=tuple(original))


def write_clustering(clustering: Clustering, path: str | Path) -> None:
    """Write original cluster tokens ordered so a reload is the identity."""
    path = Path(path)
    rows = sorted(clustering.assignment.items(), key=lambda kv: (kv[1], kv[0]))
    with path.open("w", encoding="utf-8") as fh:
        for image_id, dense_id in rows:
            fh.write(f"{image_id},{clustering.original_ids[dense_id]}\n")


def clustering_from_labels(ids: list[str], labels) -> Clustering:
    """Build a Clustering from parallel id / integer-label sequences."""
    assignment: dict[str, int] = {}
    dense: dict[int, int] = {}
    original: list[str] = []
    for image_id, lab in zip(ids, labels):
        lab = int(lab)
        if image_id in assignment:
            raise CorpusError(f"duplicate image id {image_id!r}")
        if lab not in dense:
            dense[lab] = len(original)
            original.append(str(lab))
        assignment[image_id] = dense[lab]
    return Clustering(assignment=assignment, num_clusters=len(original),
                      original_ids=tuple(original))


def load_embeddings(matrix_path: str | Path, ids_path: str | Path) -> EmbeddingMatrix:
    matrix_path, ids_path = Path(matrix_path), Path(ids_path)
    blob = matrix_path.read_bytes()
    if blob[:4] != EMB1_MAGIC:
        raise CorpusError(f"{matrix_path.name}: bad magic {blob[:4]!r}, expected EMB1")
    if len(blob) < 12:
        raise CorpusError(f"{matrix_path.name}: truncated header")
    rows, dim = struct.unpack_from("<II", blob, 4)
    expected = 12 + rows * dim * 4
    if len(blob) != expected:
        raise CorpusError(
            f"{matrix_path.name}: expected {expected} bytes for {rows}x{dim}, "
            f"got {len(blob)}"
        )
    values = np.frombuffer(blob, dtype="<f4", count=rows * dim, offset=12)
    values = values.reshape(rows, dim).copy()
    ids = ids_path.read_text(encoding="utf-8").splitlines()
    ids = [line for line in ids if line]
    if len(ids) != rows:
        raise CorpusError(
            f"{ids_path.name}: {len(ids)} ids for {rows} matrix rows"
        )
    if len(set(ids)) != len(ids):
        raise CorpusError(f"{ids_path.name}: duplicate ids")
    if not np.isfinite(values).all():
        bad = int(np.argwhere(~np.isfinite(values))[0][0])
        raise CorpusError(f"{matrix_path.name}: non-finite value in row {bad} ({ids[bad]!r})")
    return EmbeddingMatrix(ids=tuple(ids), values=values)


def write_embeddings(matrix: EmbeddingMatrix, matrix_path: str | Path,
                     ids_path: str | Path) -> None:
    values = np.ascontiguousarray(matrix.values, dtype="<f4")
    rows, dim = values.shape
    with Path(matrix_path).open("wb") as fh:
        fh.write(EMB1_MAGIC)
        fh.write(struct.pack("<II", rows, dim))
        fh.write(values.tobytes())
    Path(ids_path).write_text("\n".join(matrix.ids) + "\n", encoding="utf-8")


def load_captions(path: str | Path) -> CaptionSet:
    """Read caption JSONL: one ``{"image_id":..., "caption":...}`` per line."""
    path = Path(path)
    captions: dict[str, str] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                image_id, caption = doc["image_id"], doc["caption"]
            except (json.JSONDecodeError, KeyError, TypeError):
                raise CorpusError(f"{path.name}:{lineno}: malformed caption record") from None
            if not isinstance(caption, str) or not caption.strip():
                raise CorpusError(f"{path.name}:{lineno}: empty caption for {image_id!r}")
            if image_id in captions:
                raise CorpusError(f"{path.name}:{lineno}: duplicate image id {image_id!r}")
            captions[image_id] = caption
    return CaptionSet(captions=captions)


def write_captions(caption_set: CaptionSet, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for image_id in sorted(caption_set.captions):
            fh.write(json.dumps(
                {"image_id": image_id, "caption": caption_set.captions[image_id]},
                sort_keys=True) + "\n")


def load_labelmap(labels_path: str | Path, names_path: str | Path) -> LabelMap:
    labels_path, names_path = Path(labels_path), Path(names_path)
    labels: dict[str, int] = {}
    for lineno, (image_id, raw) in _read_csv_rows(labels_path, 2, False):
        try:
            label_id = int(raw)
        except ValueError:
            raise CorpusError(
                f"{labels_path.name}:{lineno}: label id {raw!r} is not an integer"
            ) from None
        if image_id in labels:
            raise CorpusError(f"{labels_path.name}:{lineno}: duplicate image id {image_id!r}")
        labels[image_id] = label_id
    names: dict[int, str] = {}
    for lineno, (raw, name) in _read_csv_rows(names_path, 2, False):
        label_id = int(raw)
        if label_id in names:
            raise CorpusError(f"{names_path.name}:{lineno}: duplicate label id {label_id}")
        names[label_id] = name
    missing = sorted(set(labels.values()) - set(names))
    if missing:
        raise CorpusError(f"{labels_path.name}: label ids without names: {missing[:5]}")
    return LabelMap(labels=labels, names=names)


def write_labelmap(label_map: LabelMap, labels_path: str | Path,
                   names_path: str | Path) -> None:
    with Path(labels_path).open("w", encoding="utf-8") as fh:
        for image_id in sorted(label_map.labels):
            fh.write(f"{image_id},{label_map.labels[image_id]}\n")
    with Path(names_path).open("w", encoding="utf-8") as fh:
        for label_id in sorted(label_map.names):
            fh.write(f"{label_id},{label_map.names[label_id]}\n")


def load_manifest(path: str | Path, root: str | Path) -> ImageManifest:
    """Read ``image_id,relative_path`` CSV; paths must stay under root."""
    path, root = Path(path), Path(root).resolve()
    paths: dict[str, str] = {}
    for lineno, (image_id, rel) in _read_csv_rows(path, 2, False):
        if image_id in paths:
            raise CorpusError(f"{path.name}:{lineno}: duplicate image id {image_id!r}")
        candidate = Path(rel)
        if candidate.is_absolute():
            raise CorpusError(f"{path.name}:{lineno}: absolute path {rel!r}")
        resolved = (root / candidate).resolve()
        if not resolved.is_relative_to(root):
            raise CorpusError(f"{path.name}:{lineno}: path {rel!r} escapes manifest root")
        paths[image_id] = rel
    return ImageManifest(root=root, paths=paths)


def write_manifest(manifest: ImageManifest, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for image_id in sorted(manifest.paths):
            fh.write(f"{image_id},{manifest.paths[image_id]}\n")


def validate_corpus(bundle: CorpusBundle) -> ValidationReport:
    """Cross-file id consistency checks. Pure: same bundle, same report."""
    issues: list[ValidationIssue] = []
    summary: dict[str, int] = {}

    def add(severity: str, code: str, message: str):
        issues.append(ValidationIssue(severity, code, message))
        summary[code] = summary.get(code, 0) + 1

    clustering = bundle.clustering
    if clustering is not None:
        clustered = sorted(clustering.assignment)
        summary["images"] = len(clustered)
        summary["clusters"] = clustering.num_clusters
        for kind, store in (
            ("manifest", bundle.manifest.paths if bundle.manifest else None),
            ("embeddings", bundle.embeddings if bundle.embeddings else None),
            ("captions", bundle.caption_set.captions if bundle.caption_set else None),
            ("caption-embeddings",
             bundle.caption_embeddings if bundle.caption_embeddings else None),
        ):
            if store is None:
                continue
            if isinstance(store, EmbeddingMatrix):
                missing = [i for i in clustered if not store.has(i)]
            else:
                missing = [i for i in clustered if i not in store]
            for image_id in missing[:20]:
                add("error", f"missing-{kind}",
                    f"clustered image {image_id!r} has no {kind} entry")
            if len(missing) > 20:
                add("error", f"missing-{kind}",
                    f"... and {len(missing) - 20} more clustered images missing from {kind}")

        if bundle.label_map is not None:
            labels = bundle.label_map.labels
            unlabeled = [i for i in clustered if i not in labels]
            if unlabeled:
                add("warning", "unlabeled-images",
                    f"{len(unlabeled)} clustered images have no label; "
                    "purity is computed over the labeled subset")
            unknown = sorted(set(labels) - set(clustering.assignment))
            if unknown:
                add("warning", "labels-unknown-images",
                    f"{len(unknown)} labels reference images absent from the clustering")

    if bundle.embeddings is not None and not math.isfinite(
            float(np.sum(bundle.embeddings.values, dtype=np.float64))):
        add("error", "nonfinite-embeddings", "feature embeddings contain non-finite values")

    summary["num_errors"] = sum(1 for i in issues if i.severity == "error")
    summary["num_warnings"] = sum(1 for i in issues if i.severity == "warning")
    return ValidationReport(issues=tuple(issues), summary=summary)
