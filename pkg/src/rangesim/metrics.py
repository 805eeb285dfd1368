"""Ranking and classification metrics.

All functions are pure. Correlations use average (fractional) ranks for
ties; the AUC follows the Mann-Whitney convention of counting ties as
half a win.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np


class DegenerateInputError(ValueError):
    """The statistic is undefined on this input (constant or too small)."""


def average_ranks(x: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank positions."""
    a = np.asarray(x, dtype=np.float64)
    n = a.size
    order = np.argsort(a, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation; raises on constant or undersized input."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.size != b.size:
        raise ValueError(f"pearson: lengths differ ({a.size} vs {b.size})")
    if a.size < 2:
        raise DegenerateInputError(f"pearson: need at least 2 points, got {a.size}")
    a = a - a.mean()
    b = b - b.mean()
    denom = float(np.sqrt(np.sum(a * a) * np.sum(b * b)))
    if denom == 0.0:
        raise DegenerateInputError("pearson: correlation undefined for constant input")
    return float(np.sum(a * b) / denom)


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average ranks."""
    return pearson(average_ranks(x), average_ranks(y))


class PerClassSpearman(NamedTuple):
    upper: float | None
    lower: float | None


def per_class_spearman(preds: Sequence[float], golds: Sequence[float], upper_mask: Sequence[bool]) -> PerClassSpearman:
    """Spearman restricted to each gold class; None where undefined."""
    preds = np.asarray(preds, dtype=np.float64)
    golds = np.asarray(golds, dtype=np.float64)
    mask = np.asarray(upper_mask, dtype=bool)
    out = []
    for m in (mask, ~mask):
        try:
            out.append(spearman(preds[m], golds[m]))
        except DegenerateInputError:
            out.append(None)
    return PerClassSpearman(upper=out[0], lower=out[1])


class MapResult(NamedTuple):
    value: float
    skipped: int  # queries with no relevant candidate, excluded from the mean


def average_precision(candidates: list[tuple[float, int]]) -> float | None:
    """AP of one query given (score, relevant) candidates.

    Candidates are sorted by score descending, ties broken by input
    order. Returns None when the query has no relevant candidate.
    """
    order = sorted(range(len(candidates)), key=lambda i: (-candidates[i][0], i))
    hits = 0
    precisions = []
    for rank, i in enumerate(order, start=1):
        if candidates[i][1]:
            hits += 1
            precisions.append(hits / rank)
    if not precisions:
        return None
    return float(np.mean(precisions))


def mean_average_precision(queries: list[list[tuple[float, int]]]) -> MapResult:
    """Mean AP over queries; relevant-free queries are skipped, not zeroed."""
    aps = []
    skipped = 0
    for q in queries:
        ap = average_precision(q)
        if ap is None:
            skipped += 1
        else:
            aps.append(ap)
    if not aps:
        raise DegenerateInputError("mean_average_precision: no query has a relevant candidate")
    return MapResult(value=float(np.mean(aps)), skipped=skipped)


def load_rerank_jsonl(path) -> list[list[tuple[float, int]]]:
    """Reranking queries, one JSON object per line:
    {"query_id": ..., "candidates": [{"score": float, "relevant": 0|1}, ...]}."""
    queries = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            try:
                cands = [(float(c["score"]), int(c["relevant"])) for c in obj["candidates"]]
            except (KeyError, TypeError) as e:
                raise ValueError(f"{path}:{lineno}: malformed query record: {e}") from None
            queries.append(cands)
    return queries


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC: (wins + 0.5*ties) / (positives * negatives).

    Computed from average ranks, which is exactly the pair-counting
    statistic including the half-credit for ties.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise DegenerateInputError("auc: both classes must be present")
    ranks = average_ranks(s)
    u = float(np.sum(ranks[y == 1])) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


class RouterAccuracy(NamedTuple):
    sentences: float  # fraction of sentences routed to the pair's gold bin
    pairs: float  # fraction of pairs with both sentences correct


def router_accuracy(chosen: Sequence[tuple[int, int]], gold_bins: Sequence[int]) -> RouterAccuracy | None:
    """Routing accuracy; None on an empty set."""
    if len(chosen) == 0:
        return None
    if len(chosen) != len(gold_bins):
        raise ValueError(f"router_accuracy: lengths differ ({len(chosen)} vs {len(gold_bins)})")
    sent_hits = 0
    pair_hits = 0
    for (c1, c2), g in zip(chosen, gold_bins):
        sent_hits += int(c1 == g) + int(c2 == g)
        pair_hits += int(c1 == g and c2 == g)
    n = len(gold_bins)
    return RouterAccuracy(sentences=sent_hits / (2 * n), pairs=pair_hits / n)


@dataclass
class EvalReport:
    """Scalar evaluation summary; None marks metrics that were undefined
    or not requested on this run."""

    spearman_overall: float | None = None
    spearman_upper: float | None = None
    spearman_lower: float | None = None
    pearson: float | None = None
    router_accuracy: float | None = None
    router_accuracy_pairs: float | None = None
    auc: float | None = None
    map: float | None = None
    map_skipped_queries: int | None = None
    overlap: float | None = None
    alignment: float | None = None
    uniformity: float | None = None
    param_count: dict = field(default_factory=dict)
    n_pairs: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "spearman_overall": self.spearman_overall,
            "spearman_upper": self.spearman_upper,
            "spearman_lower": self.spearman_lower,
            "pearson": self.pearson,
            "router_accuracy": self.router_accuracy,
            "router_accuracy_pairs": self.router_accuracy_pairs,
            "auc": self.auc,
            "map": self.map,
            "map_skipped_queries": self.map_skipped_queries,
            "overlap": self.overlap,
            "alignment": self.alignment,
            "uniformity": self.uniformity,
            "param_count": self.param_count,
            "n_pairs": self.n_pairs,
            "notes": self.notes,
        }
