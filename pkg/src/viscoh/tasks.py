"""Deterministic generation of forced-choice HITs from a clustering.

A learnability HIT shows M reference images from a class plus two queries
(one held-out member, one negative); z is the hidden bit saying which query
is the positive (0 -> query_a).  Describability HITs reuse the exact query
pairs and z bits but replace the reference grid with the class description.
All sampling comes from per-class streams of the portable PRNG, so a task
set is a pure function of (clustering, config, descriptions, centroid map).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from .corpus import Clustering
from .metrics import CentroidMap
from .rng import Rng, derive_seed


class TaskError(ValueError):
    pass


@dataclass(frozen=True)
class StudyConfig:
    seed: int
    selected_classes: tuple[int, ...]
    reference_size: int = 10
    hits_per_class: int = 20
    annotators_per_hit: int = 3
    negative_mode: str = "random"  # "random" | "hard"
    rate_limit_per_class_per_day: int | None = 1

    def __post_init__(self):
        if self.reference_size < 1:
            raise TaskError("reference_size must be >= 1")
        if self.hits_per_class < 1:
            raise TaskError("hits_per_class must be >= 1")
        if self.annotators_per_hit < 1:
            raise TaskError("annotators_per_hit must be >= 1")
        if self.negative_mode not in ("random", "hard"):
            raise TaskError(f"unknown negative mode {self.negative_mode!r}")

    def to_doc(self) -> dict:
        return {
            "seed": self.seed,
            "selected_classes": list(self.selected_classes),
            "reference_size": self.reference_size,
            "hits_per_class": self.hits_per_class,
            "annotators_per_hit": self.annotators_per_hit,
            "negative_mode": self.negative_mode,
            "rate_limit_per_class_per_day": self.rate_limit_per_class_per_day,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "StudyConfig":
        return cls(
            seed=int(doc["seed"]),
            selected_classes=tuple(int(c) for c in doc["selected_classes"]),
            reference_size=int(doc.get("reference_size", 10)),
            hits_per_class=int(doc.get("hits_per_class", 20)),
            annotators_per_hit=int(doc.get("annotators_per_hit", 3)),
            negative_mode=doc.get("negative_mode", "random"),
            rate_limit_per_class_per_day=doc.get("rate_limit_per_class_per_day", 1),
        )


@dataclass(frozen=True)
class Task:
    hit_id: str
    class_id: int
    mode: str  # "learnability" | "describability" | "rating"
    query_a: str | None
    query_b: str | None
    z: int | None  # 0 -> query_a is the positive; None for rating or public sets
    reference_images: tuple[str, ...] | None = None
    description: str | None = None
    negative_source: int | str | None = None  # cluster id or "background"

    def positive_query(self) -> str:
        if self.z is None or self.query_a is None:
            raise TaskError(f"{self.hit_id}: no hidden bit available")
        return self.query_a if self.z == 0 else self.query_b

    def public_doc(self) -> dict:
        """Wire form served to annotators; never includes z."""
        doc = {
            "hit_id": self.hit_id,
            "class_id": self.class_id,
            "mode": self.mode,
        }
        if self.reference_images is not None:
            doc["reference_images"] = list(self.reference_images)
        if self.description is not None:
            doc["description"] = self.description
        if self.query_a is not None:
            doc["query_a"] = self.query_a
            doc["query_b"] = self.query_b
        return doc

    def to_doc(self, include_hidden: bool) -> dict:
        doc = {"type": "task", **self.public_doc()}
        if self.negative_source is not None:
            doc["negative_source"] = self.negative_source
        if include_hidden and self.z is not None:
            doc["z"] = self.z
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "Task":
        refs = doc.get("reference_images")
        return cls(
            hit_id=doc["hit_id"],
            class_id=int(doc["class_id"]),
            mode=doc["mode"],
            query_a=doc.get("query_a"),
            query_b=doc.get("query_b"),
            z=doc.get("z"),
            reference_images=tuple(refs) if refs is not None else None,
            description=doc.get("description"),
            negative_source=doc.get("negative_source"),
        )


@dataclass(frozen=True)
class TaskSet:
    study_id: str
    config: StudyConfig
    tasks: tuple[Task, ...]
    exclusions: tuple[tuple[int, str], ...] = field(default_factory=tuple)

    def __post_init__(self):
        hit_ids = [t.hit_id for t in self.tasks]
        if len(set(hit_ids)) != len(hit_ids):
            raise TaskError("duplicate hit ids in task set")


def build_learnability_tasks(clustering: Clustering, config: StudyConfig,
                             centroid_map: CentroidMap | None = None,
                             study_id: str | None = None) -> TaskSet:
    """One HIT set per selected class; classes smaller than M+1 are excluded."""
    if not config.selected_classes:
        raise TaskError("no classes selected")
    members = clustering.members()
    for class_id in config.selected_classes:
        if class_id not in members:
            raise TaskError(f"selected class {class_id} not in clustering")
    if config.negative_mode == "hard":
        if clustering.num_clusters < 2:
            raise TaskError("hard negatives need at least 2 clusters")
        if centroid_map is None:
            raise TaskError("hard negative mode requires a centroid map")

    all_ids = sorted(clustering.assignment)
    if study_id is None:
        study_id = f"learn-{config.negative_mode}-{config.seed & 0xFFFFFFFF:08x}"

    tasks: list[Task] = []
    exclusions: list[tuple[int, str]] = []
    m = config.reference_size
    for class_id in sorted(set(config.selected_classes)):
        pool = members[class_id]
        if len(pool) < m + 1:
            exclusions.append(
                (class_id, f"needs at least {m + 1} members, has {len(pool)}"))
            continue
        if len(pool) == len(all_ids):
            raise TaskError(f"class {class_id} covers every image; no negatives exist")
        member_set = set(pool)
        if config.negative_mode == "hard":
            hard_cluster = centroid_map.hard_negative[class_id]
            hard_pool = members[hard_cluster]
            negative_source: int | str = hard_cluster
        rng = Rng(derive_seed(config.seed, "learnability", class_id))
        for hit_index in range(config.hits_per_class):
            reference = rng.sample(pool, m)
            held_out = [i for i in pool if i not in set(reference)]
            positive = held_out[rng.randbelow(len(held_out))]
            if config.negative_mode == "hard":
                negative = hard_pool[rng.randbelow(len(hard_pool))]
            else:
                negative_source = "background"
                while True:  # rejection sampling over X - X_c
                    negative = all_ids[rng.randbelow(len(all_ids))]
                    if negative not in member_set:
                        break
            z = int(rng.bernoulli(0.5))
            query_a, query_b = (positive, negative) if z == 0 else (negative, positive)
            tasks.append(Task(
                hit_id=f"{study_id}-c{class_id:05d}-h{hit_index:04d}",
                class_id=class_id,
                mode="learnability",
                query_a=query_a,
                query_b=query_b,
                z=z,
                reference_images=tuple(reference),
                negative_source=negative_source,
            ))
    if not tasks:
        raise TaskError("every selected class was excluded")
    return TaskSet(study_id=study_id, config=config, tasks=tuple(tasks),
                   exclusions=tuple(exclusions))


def derive_describability_tasks(taskset: TaskSet,
                                descriptions: Mapping[int, str]) -> TaskSet:
    """Same query pairs and z bits, reference grid replaced by the description."""
    missing = sorted({t.class_id for t in taskset.tasks} - set(descriptions))
    if missing:
        raise TaskError(f"no description for classes: {missing}")
    derived = tuple(
        replace(task,
                hit_id=task.hit_id + "-d",
                mode="describability",
                reference_images=None,
                description=descriptions[task.class_id])
        for task in taskset.tasks
    )
    return TaskSet(study_id=taskset.study_id + "-desc", config=taskset.config,
                   tasks=derived, exclusions=taskset.exclusions)


def build_rating_tasks(clustering: Clustering, descriptions: Mapping[int, str],
                       config: StudyConfig, study_id: str | None = None) -> TaskSet:
    """One caption-quality rating task per selected class (Likert 1-5 + yes/no)."""
    if not config.selected_classes:
        raise TaskError("no classes selected")
    members = clustering.members()
    missing = sorted(set(config.selected_classes) - set(descriptions))
    if missing:
        raise TaskError(f"no description for classes: {missing}")
    if study_id is None:
        study_id = f"rating-{config.seed & 0xFFFFFFFF:08x}"
    tasks = []
    for class_id in sorted(set(config.selected_classes)):
        pool = members.get(class_id)
        if not pool:
            raise TaskError(f"selected class {class_id} not in clustering")
        rng = Rng(derive_seed(config.seed, "rating", class_id))
        sample = rng.sample(pool, min(config.reference_size, len(pool)))
        tasks.append(Task(
            hit_id=f"{study_id}-c{class_id:05d}-r",
            class_id=class_id,
            mode="rating",
            query_a=None,
            query_b=None,
            z=None,
            reference_images=tuple(sample),
            description=descriptions[class_id],
        ))
    return TaskSet(study_id=study_id, config=config, tasks=tuple(tasks))


def write_taskset(taskset: TaskSet, path: str | Path, include_hidden: bool = True,
                  provenance: dict | None = None) -> None:
    """JSONL: meta record first, then one task per line.

    `include_hidden=False` writes the public variant without z.
    """
    meta = {
        "type": "meta",
        "schema": "viscoh-taskset-v1",
        "study_id": taskset.study_id,
        "config": taskset.config.to_doc(),
        "exclusions": [[c, reason] for c, reason in taskset.exclusions],
        "hidden_included": include_hidden,
    }
    if provenance is not None:
        meta["provenance"] = provenance
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(meta, sort_keys=True) + "\n")
        for task in taskset.tasks:
            fh.write(json.dumps(task.to_doc(include_hidden), sort_keys=True) + "\n")


def load_taskset(path: str | Path) -> TaskSet:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise TaskError(f"{path.name}: empty task file")
    meta = json.loads(lines[0])
    if meta.get("type") != "meta":
        raise TaskError(f"{path.name}: first line must be the meta record")
    tasks = []
    for line in lines[1:]:
        doc = json.loads(line)
        if doc.get("type") != "task":
            raise TaskError(f"{path.name}: unexpected record type {doc.get('type')!r}")
        tasks.append(Task.from_doc(doc))
    return TaskSet(
        study_id=meta["study_id"],
        config=StudyConfig.from_doc(meta["config"]),
        tasks=tuple(tasks),
        exclusions=tuple((int(c), reason) for c, reason in meta.get("exclusions", [])),
    )
