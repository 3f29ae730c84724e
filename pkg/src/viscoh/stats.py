"""Turn recorded forced-choice responses into study statistics.

The estimate for a class is plain accuracy k/n over counted responses, with
an exact (Clopper-Pearson) 95% interval from hand-rolled regularized
incomplete beta quantiles, and Krippendorff's alpha (nominal, missing
entries allowed) over the class's HITs with the *chosen query identity* as
the value, so two coders agreeing on the wrong image still count as
agreement.

Response folding (duplicate / per-day rate / replication-cap rules) lives
here in one incremental class used identically by the live service, by log
replay after a restart, and by the offline scorer; that shared fold is what
makes /api/report byte-identical to offline scoring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .rng import Rng
from .tasks import Task, TaskSet

_BETA_MAX_ITER = 300
_BETA_EPS = 1e-14
_BETA_FPMIN = 1e-300
_QUANTILE_TOL = 1e-10


class StatsError(ValueError):
    pass


# --- exact binomial interval ------------------------------------------------

def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Lentz evaluation of the incomplete-beta continued fraction."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_FPMIN:
        d = _BETA_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_FPMIN:
            d = _BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETA_FPMIN:
            c = _BETA_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_FPMIN:
            d = _BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETA_FPMIN:
            c = _BETA_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) via continued fraction, symmetry transform for large x."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def beta_quantile(p: float, a: float, b: float) -> float:
    """Inverse of I_x(a, b) by bisection to absolute tolerance 1e-10."""
    lo, hi = 0.0, 1.0
    while hi - lo > _QUANTILE_TOL:
        mid = 0.5 * (lo + hi)
        if regularized_incomplete_beta(a, b, mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact two-sided binomial interval for k successes in n trials."""
    if n < 1:
        raise StatsError("n must be >= 1")
    if not 0 <= k <= n:
        raise StatsError(f"need 0 <= k <= n, got k={k}, n={n}")
    tail = (1.0 - level) / 2.0
    lo = 0.0 if k == 0 else beta_quantile(tail, k, n - k + 1)
    hi = 1.0 if k == n else beta_quantile(1.0 - tail, k + 1, n - k)
    return lo, hi


# --- inter-rater agreement ----------------------------------------------------

@dataclass(frozen=True)
class AlphaResult:
    value: float
    degenerate: bool  # expected disagreement was zero (single value overall)
    n_pairable: int


def krippendorff_alpha(units: Iterable[Sequence]) -> AlphaResult:
    """Nominal-data alpha over units x coders values; None marks missing.

    Coincidence-matrix formulation: within each unit with m >= 2 values,
    every ordered value pair contributes 1/(m-1).
    """
    pair_disagree = 0.0  # sum over c != k of o_ck
    value_mass: dict = {}  # n_c
    n_values = 0
    for unit in units:
        values = [v for v in unit if v is not None]
        m = len(values)
        if m < 2:
            continue
        n_values += m
        weight = 1.0 / (m - 1)
        for i, vi in enumerate(values):
            value_mass[vi] = value_mass.get(vi, 0.0) + 1.0
            for j, vj in enumerate(values):
                if i != j and vi != vj:
                    pair_disagree += weight
    if n_values < 2:
        raise StatsError("fewer than 2 pairable values")
    masses = list(value_mass.values())
    expected_pairs = n_values * n_values - sum(m * m for m in masses)
    if expected_pairs == 0.0:
        return AlphaResult(value=1.0, degenerate=True, n_pairable=n_values)
    alpha = 1.0 - (n_values - 1) * pair_disagree / expected_pairs
    return AlphaResult(value=alpha, degenerate=False, n_pairable=n_values)


# --- responses and the canonical fold -----------------------------------------

@dataclass(frozen=True)
class Response:
    hit_id: str
    worker_id: str
    chosen_query: str | None
    received_at: str  # ISO-8601 UTC
    likert: int | None = None
    at_least_one: str | None = None

    def to_doc(self) -> dict:
        doc = {
            "type": "response",
            "hit_id": self.hit_id,
            "worker": self.worker_id,
            "received_at": self.received_at,
        }
        if self.chosen_query is not None:
            doc["chosen_query"] = self.chosen_query
        if self.likert is not None:
            doc["likert"] = self.likert
        if self.at_least_one is not None:
            doc["at_least_one"] = self.at_least_one
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "Response":
        return cls(
            hit_id=doc["hit_id"],
            worker_id=doc["worker"],
            chosen_query=doc.get("chosen_query"),
            received_at=doc.get("received_at", ""),
            likert=doc.get("likert"),
            at_least_one=doc.get("at_least_one"),
        )


def utc_day(received_at: str) -> str:
    """Calendar date part of an ISO UTC timestamp."""
    return received_at[:10]


@dataclass
class Disposition:
    counted: bool
    flag: str | None = None  # "duplicate" | "overflow" | "rate_limited"


class ResponseFolder:
    """Sequential fold of responses into per-HIT answer state.

    Rules, applied in order per record: a (hit, worker) pair is accepted at
    most once; describability answers beyond the per-(worker, class,
    UTC-day) limit are excluded; answers beyond annotators_per_hit on a HIT
    are excluded.  Excluded records are flagged, never dropped silently.
    The fold is a pure function of the record sequence, which is what makes
    live state, post-crash replay, and offline scoring agree.
    """

    def __init__(self, taskset: TaskSet):
        self.taskset = taskset
        self.tasks: dict[str, Task] = {t.hit_id: t for t in taskset.tasks}
        self.per_hit: dict[str, dict[str, str]] = {t.hit_id: {} for t in taskset.tasks}
        self.ratings: dict[str, dict[str, tuple[int, str]]] = {}
        self.seen: set[tuple[str, str]] = set()
        self.rate_counts: dict[tuple[str, int, str], int] = {}
        self.flags: list[dict] = []
        self.cap = taskset.config.annotators_per_hit
        self.rate_limit = taskset.config.rate_limit_per_class_per_day

    def validate(self, response: Response) -> Task:
        task = self.tasks.get(response.hit_id)
        if task is None:
            raise StatsError(f"unknown hit id {response.hit_id!r}")
        if task.mode == "rating":
            if response.likert is None or not 1 <= response.likert <= 5:
                raise StatsError(f"{response.hit_id}: likert must be in 1..5")
            if response.at_least_one not in ("yes", "no"):
                raise StatsError(f"{response.hit_id}: at_least_one must be yes/no")
        else:
            if response.chosen_query not in (task.query_a, task.query_b):
                raise StatsError(
                    f"{response.hit_id}: chosen query {response.chosen_query!r} "
                    "is not one of the HIT's two queries")
        return task

    def add(self, response: Response) -> Disposition:
        task = self.validate(response)
        key = (response.hit_id, response.worker_id)
        if key in self.seen:
            return self._flag(response, "duplicate")
        self.seen.add(key)
        if task.mode == "describability" and self.rate_limit is not None:
            rate_key = (response.worker_id, task.class_id, utc_day(response.received_at))
            if self.rate_counts.get(rate_key, 0) >= self.rate_limit:
                return self._flag(response, "rate_limited")
        if task.mode == "rating":
            bucket = self.ratings.setdefault(response.hit_id, {})
            if len(bucket) >= self.cap:
                return self._flag(response, "overflow")
            bucket[response.worker_id] = (response.likert, response.at_least_one)
            return Disposition(counted=True)
        answers = self.per_hit[response.hit_id]
        if len(answers) >= self.cap:
            return self._flag(response, "overflow")
        answers[response.worker_id] = response.chosen_query
        if task.mode == "describability" and self.rate_limit is not None:
            rate_key = (response.worker_id, task.class_id, utc_day(response.received_at))
            self.rate_counts[rate_key] = self.rate_counts.get(rate_key, 0) + 1
        return Disposition(counted=True)

    def _flag(self, response: Response, reason: str) -> Disposition:
        self.flags.append({"hit_id": response.hit_id, "worker": response.worker_id,
                           "flag": reason})
        return Disposition(counted=False, flag=reason)


@dataclass(frozen=True)
class ClassStats:
    class_id: int
    n: int
    k: int
    coherence: float | None
    ci_low: float | None
    ci_high: float | None
    alpha: float | None
    alpha_degenerate: bool


@dataclass(frozen=True)
class ScoreResult:
    per_class: dict[int, tuple[int, int]]  # class -> (k, n)
    per_hit_answers: dict[str, dict[str, str]]
    flags: tuple[dict, ...]
    class_stats: tuple[ClassStats, ...] = field(default=())


def score_responses(taskset: TaskSet, responses: Iterable[Response],
                    level: float = 0.95) -> ScoreResult:
    """Fold responses, then per-class (k, n), CP intervals and alpha.

    A response is correct iff it chose the positive query; unanswered HITs
    contribute nothing; flagged records are excluded from k/n.
    """
    folder = ResponseFolder(taskset)
    for response in responses:
        folder.add(response)
    return summarize(folder, level=level)


def summarize(folder: ResponseFolder, level: float = 0.95) -> ScoreResult:
    taskset = folder.taskset
    class_ids = sorted({t.class_id for t in taskset.tasks if t.mode != "rating"})
    per_class: dict[int, tuple[int, int]] = {}
    stats: list[ClassStats] = []
    for class_id in class_ids:
        hits = [t for t in taskset.tasks if t.class_id == class_id and t.mode != "rating"]
        k = n = 0
        units = []
        for task in hits:
            answers = folder.per_hit[task.hit_id]
            positive = task.positive_query()
            for chosen in answers.values():
                n += 1
                if chosen == positive:
                    k += 1
            units.append(answers)
        per_class[class_id] = (k, n)
        alpha_value: float | None = None
        degenerate = False
        worker_ids = sorted({w for unit in units for w in unit})
        matrix = [[unit.get(w) for w in worker_ids] for unit in units]
        try:
            result = krippendorff_alpha(matrix)
            alpha_value, degenerate = result.value, result.degenerate
        except StatsError:
            pass
        if n > 0:
            lo, hi = clopper_pearson(k, n, level)
            stats.append(ClassStats(class_id, n, k, k / n, lo, hi,
                                    alpha_value, degenerate))
        else:
            stats.append(ClassStats(class_id, 0, 0, None, None, None,
                                    alpha_value, degenerate))
    return ScoreResult(per_class=per_class,
                       per_hit_answers=dict(folder.per_hit),
                       flags=tuple(folder.flags),
                       class_stats=tuple(stats))


def pooled_alpha(folder_or_result) -> AlphaResult | None:
    """Alpha over all HITs of the study pooled into one unit set."""
    answers = (folder_or_result.per_hit_answers
               if isinstance(folder_or_result, ScoreResult)
               else folder_or_result.per_hit)
    worker_ids = sorted({w for unit in answers.values() for w in unit})
    matrix = [[unit.get(w) for w in worker_ids] for _, unit in sorted(answers.items())]
    try:
        return krippendorff_alpha(matrix)
    except StatsError:
        return None


# --- purity-binned aggregation -------------------------------------------------

@dataclass(frozen=True)
class AggregateRow:
    lo: float
    hi: float
    class_count: int
    mean_coherence: float | None
    pooled_k: int
    pooled_n: int
    ci_low: float | None
    ci_high: float | None
    mean_alpha: float | None


def aggregate_by_purity(class_stats: Sequence[ClassStats],
                        purity_by_class: dict[int, float],
                        bin_edges: Sequence[float],
                        level: float = 0.95) -> list[AggregateRow]:
    edges = list(bin_edges)
    if len(edges) < 2 or any(e2 <= e1 for e1, e2 in zip(edges, edges[1:])):
        raise StatsError("bin edges must be strictly increasing")
    if edges[0] != 0.0 or edges[-1] != 1.0:
        raise StatsError("bin edges must start at 0.0 and end at 1.0")
    missing = [s.class_id for s in class_stats if s.class_id not in purity_by_class]
    if missing:
        raise StatsError(f"classes without purity values: {missing[:5]}")
    rows: list[AggregateRow] = []
    for b in range(len(edges) - 1):
        lo, hi = edges[b], edges[b + 1]
        last = b == len(edges) - 2
        member_stats = [
            s for s in class_stats
            if (lo <= purity_by_class[s.class_id] < hi)
            or (last and purity_by_class[s.class_id] == hi)
        ]
        scored = [s for s in member_stats if s.n > 0]
        if not member_stats:
            rows.append(AggregateRow(lo, hi, 0, None, 0, 0, None, None, None))
            continue
        pooled_k = sum(s.k for s in scored)
        pooled_n = sum(s.n for s in scored)
        mean_c = (sum(s.coherence for s in scored) / len(scored)) if scored else None
        ci = clopper_pearson(pooled_k, pooled_n, level) if pooled_n else (None, None)
        alphas = [s.alpha for s in member_stats if s.alpha is not None]
        mean_alpha = sum(alphas) / len(alphas) if alphas else None
        rows.append(AggregateRow(lo, hi, len(member_stats), mean_c,
                                 pooled_k, pooled_n, ci[0], ci[1], mean_alpha))
    return rows


# --- synthetic annotators -------------------------------------------------------

_SIM_EPOCH = "2020-01-01T00:00:00Z"


def _sim_timestamp(seq: int) -> str:
    # deterministic fake timeline: one response per second from a fixed epoch
    minutes, seconds = divmod(seq, 60)
    hours, minutes = divmod(minutes, 60)
    days, hours = divmod(hours, 24)
    # stay inside January 2020 for simplicity; studies this size never exceed it
    return f"2020-01-{1 + days:02d}T{hours:02d}:{minutes:02d}:{seconds:02d}Z"


def simulate_annotators(taskset: TaskSet, accuracy: float, seed: int) -> list[Response]:
    """Synthetic workers answering every choice HIT with the given accuracy.

    Worker w picks the positive query with probability `accuracy`,
    independently per HIT; draws come from the portable PRNG so the output
    is byte-stable under the seed.  Rating HITs are skipped.
    """
    if not 0.0 <= accuracy <= 1.0:
        raise StatsError("accuracy must be in [0, 1]")
    rng = Rng(seed)
    workers = [f"sim-{i:03d}" for i in range(taskset.config.annotators_per_hit)]
    responses: list[Response] = []
    seq = 0
    for task in taskset.tasks:
        if task.mode == "rating":
            continue
        positive = task.positive_query()
        negative = task.query_b if positive == task.query_a else task.query_a
        for worker in workers:
            chosen = positive if rng.bernoulli(accuracy) else negative
            responses.append(Response(hit_id=task.hit_id, worker_id=worker,
                                      chosen_query=chosen,
                                      received_at=_sim_timestamp(seq)))
            seq += 1
    return responses
