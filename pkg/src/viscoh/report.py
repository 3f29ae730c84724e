"""Canonical study reports.

One code path renders the scoring report for both the live service endpoint
and the offline CLI, and the JSON form is canonical (sorted keys, fixed
indentation, trailing newline, no wall-clock fields), so the two are
byte-identical over the same response log.
"""

from __future__ import annotations

import json
from typing import Iterable, Sequence

from .stats import (AggregateRow, Response, aggregate_by_purity, clopper_pearson,
                    pooled_alpha, score_responses)
from .tasks import TaskSet

DEFAULT_BIN_EDGES = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def render_json(doc: dict) -> bytes:
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode("utf-8")


def build_score_report(taskset: TaskSet, responses: Iterable[Response],
                       level: float = 0.95) -> dict:
    result = score_responses(taskset, responses, level=level)
    doc: dict = {
        "schema": "viscoh-report-v1",
        "study_id": taskset.study_id,
        "modes": sorted({t.mode for t in taskset.tasks}),
        "num_hits": len(taskset.tasks),
        "classes": [],
    }
    total_k = total_n = 0
    for s in result.class_stats:
        total_k += s.k
        total_n += s.n
        doc["classes"].append({
            "class_id": s.class_id,
            "n": s.n,
            "k": s.k,
            "coherence": s.coherence,
            "ci_low": s.ci_low,
            "ci_high": s.ci_high,
            "alpha": s.alpha,
            "alpha_degenerate": s.alpha_degenerate,
        })
    pooled = {"k": total_k, "n": total_n}
    if total_n > 0:
        lo, hi = clopper_pearson(total_k, total_n, level)
        pooled.update(coherence=total_k / total_n, ci_low=lo, ci_high=hi)
    alpha = pooled_alpha(result)
    pooled["alpha"] = alpha.value if alpha else None
    pooled["alpha_degenerate"] = alpha.degenerate if alpha else False
    doc["pooled"] = pooled

    flag_counts: dict[str, int] = {}
    for flag in result.flags:
        flag_counts[flag["flag"]] = flag_counts.get(flag["flag"], 0) + 1
    doc["excluded"] = flag_counts
    return doc


def attach_purity_aggregates(doc: dict, class_stats, purity_by_class: dict[int, float],
                             bin_edges: Sequence[float] = DEFAULT_BIN_EDGES,
                             level: float = 0.95) -> dict:
    rows = aggregate_by_purity(class_stats, purity_by_class, bin_edges, level=level)
    doc = dict(doc)
    for entry in doc["classes"]:
        entry["purity"] = purity_by_class.get(entry["class_id"])
    doc["purity_bins"] = [_aggregate_doc(row) for row in rows]
    return doc


def _aggregate_doc(row: AggregateRow) -> dict:
    return {
        "bin": [row.lo, row.hi],
        "class_count": row.class_count,
        "mean_coherence": row.mean_coherence,
        "pooled_k": row.pooled_k,
        "pooled_n": row.pooled_n,
        "ci_low": row.ci_low,
        "ci_high": row.ci_high,
        "mean_alpha": row.mean_alpha,
    }


def report_csv(doc: dict) -> str:
    """Flat CSV: one row per class, then one per purity bin (if present)."""
    lines = ["row_type,class_id,bin_lo,bin_hi,n,k,coherence,ci_low,ci_high,alpha,purity"]

    def fmt(x) -> str:
        if x is None:
            return ""
        if isinstance(x, float):
            return f"{x:.6f}"
        return str(x)

    for entry in doc["classes"]:
        lines.append(",".join([
            "class", fmt(entry["class_id"]), "", "",
            fmt(entry["n"]), fmt(entry["k"]), fmt(entry["coherence"]),
            fmt(entry["ci_low"]), fmt(entry["ci_high"]), fmt(entry["alpha"]),
            fmt(entry.get("purity")),
        ]))
    for row in doc.get("purity_bins", []):
        lines.append(",".join([
            "bin", "", fmt(row["bin"][0]), fmt(row["bin"][1]),
            fmt(row["pooled_n"]), fmt(row["pooled_k"]), fmt(row["mean_coherence"]),
            fmt(row["ci_low"]), fmt(row["ci_high"]), fmt(row["mean_alpha"]), "",
        ]))
    return "\n".join(lines) + "\n"
