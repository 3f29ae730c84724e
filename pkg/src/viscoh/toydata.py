"""Deterministic synthetic corpus: 20 visual clusters x 30 small PNGs.

Each cluster gets a distinct hue and pattern so the forced-choice tasks are
genuinely solvable by a human; features and caption embeddings are noisy
cluster-centered vectors so k-means, hard negatives and caption selection
all behave non-trivially.  Labels collapse pairs of clusters and add
per-cluster label noise to spread purity across bins.
"""

from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np
from PIL import Image

from .corpus import (CaptionSet, EmbeddingMatrix, ImageManifest, LabelMap,
                     clustering_from_labels, write_captions, write_clustering,
                     write_embeddings, write_labelmap, write_manifest)

_COLOR_WORDS = ["red", "orange", "amber", "yellow", "lime", "green", "teal",
                "cyan", "azure", "blue", "indigo", "violet", "purple",
                "magenta", "pink", "crimson", "rust", "olive", "mint", "navy"]
_PATTERN_WORDS = ["striped", "dotted", "checkered", "ringed"]
_GENERIC_CAPTION = "a colorful abstract pattern"


def _render_image(hue: float, pattern: int, jitter: np.random.Generator,
                  size: int = 48) -> Image.Image:
    r, g, b = colorsys.hsv_to_rgb(hue, 0.85, 0.9)
    fg = np.array([r, g, b]) * 255
    bg = fg * 0.25
    img = np.tile(bg, (size, size, 1))
    phase = int(jitter.integers(0, 6))
    yy, xx = np.mgrid[0:size, 0:size]
    if pattern == 0:  # stripes
        mask = ((xx + phase) // 6) % 2 == 0
    elif pattern == 1:  # dots
        mask = ((xx + phase) % 12 < 5) & ((yy + phase) % 12 < 5)
    elif pattern == 2:  # checker
        mask = (((xx + phase) // 8) + ((yy + phase) // 8)) % 2 == 0
    else:  # rings
        cx = cy = size / 2
        radius = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        mask = ((radius + phase) // 5) % 2 == 0
    img[mask] = fg
    noise = jitter.normal(0.0, 12.0, size=img.shape)
    img = np.clip(img + noise, 0, 255).astype(np.uint8)
    return Image.fromarray(img, mode="RGB")


def generate_toy_corpus(out_dir: str | Path, seed: int = 7,
                        num_clusters: int = 20, per_cluster: int = 30,
                        feature_dim: int = 16, caption_dim: int = 8,
                        num_labels: int = 10) -> dict[str, Path]:
    """Write the full corpus layout under out_dir and return the file map."""
    out = Path(out_dir)
    images_dir = out / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    total = num_clusters * per_cluster
    # opaque ids in an order uncorrelated with cluster
    order = rng.permutation(total)
    image_ids = [""] * total
    for slot, idx in enumerate(order):
        image_ids[idx] = f"im{slot:05d}"

    assignment_ids: list[str] = []
    assignment_clusters: list[int] = []
    captions: dict[str, str] = {}
    labels: dict[str, int] = {}
    manifest_paths: dict[str, str] = {}

    feature_centers = rng.normal(0.0, 5.0, size=(num_clusters, feature_dim))
    caption_centers = rng.normal(0.0, 1.0, size=(num_clusters, caption_dim))
    caption_centers /= np.linalg.norm(caption_centers, axis=1, keepdims=True)
    generic_center = rng.normal(0.0, 1.0, size=caption_dim)
    generic_center /= np.linalg.norm(generic_center)

    features = np.zeros((total, feature_dim), dtype=np.float64)
    caption_vecs = np.zeros((total, caption_dim), dtype=np.float64)
    label_noise = np.linspace(0.0, 0.5, num_clusters)

    idx = 0
    for cluster in range(num_clusters):
        hue = cluster / num_clusters
        pattern = cluster % len(_PATTERN_WORDS)
        base_caption = f"{_COLOR_WORDS[cluster]} {_PATTERN_WORDS[pattern]} pattern"
        for member in range(per_cluster):
            image_id = image_ids[idx]
            image = _render_image(hue, pattern, rng)
            rel = f"images/{image_id}.png"
            image.save(out / rel)
            manifest_paths[image_id] = rel

            assignment_ids.append(image_id)
            assignment_clusters.append(cluster)

            features[idx] = feature_centers[cluster] + rng.normal(0.0, 0.5, feature_dim)
            if member % 10 == 9:  # sprinkle generic captions
                captions[image_id] = _GENERIC_CAPTION
                center = generic_center
            else:
                variant = ["a photo of", "closeup of", "a picture showing"][member % 3]
                captions[image_id] = f"{variant} {base_caption}"
                center = caption_centers[cluster]
            caption_vecs[idx] = center + rng.normal(0.0, 0.15, caption_dim)

            if rng.random() < label_noise[cluster]:
                labels[image_id] = int(rng.integers(0, num_labels))
            else:
                labels[image_id] = cluster % num_labels
            idx += 1

    clustering = clustering_from_labels(assignment_ids, assignment_clusters)
    label_map = LabelMap(labels=labels,
                         names={i: f"label-{i:02d}" for i in range(num_labels)})
    manifest = ImageManifest(root=out.resolve(), paths=manifest_paths)
    feature_matrix = EmbeddingMatrix(ids=tuple(assignment_ids),
                                     values=features.astype(np.float32))
    caption_matrix = EmbeddingMatrix(ids=tuple(assignment_ids),
                                     values=caption_vecs.astype(np.float32))

    paths = {
        "manifest": out / "manifest.csv",
        "clustering": out / "clustering.csv",
        "labels": out / "labels.csv",
        "label_names": out / "label_names.csv",
        "features": out / "features.emb1",
        "features_ids": out / "features.ids",
        "caption_embs": out / "caption_embs.emb1",
        "caption_embs_ids": out / "caption_embs.ids",
        "captions": out / "captions.jsonl",
        "images_dir": images_dir,
    }
    write_manifest(manifest, paths["manifest"])
    write_clustering(clustering, paths["clustering"])
    write_labelmap(label_map, paths["labels"], paths["label_names"])
    write_embeddings(feature_matrix, paths["features"], paths["features_ids"])
    write_embeddings(caption_matrix, paths["caption_embs"], paths["caption_embs_ids"])
    write_captions(CaptionSet(captions=captions), paths["captions"])
    return paths
