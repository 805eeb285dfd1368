"""Assemble evaluation reports from a trained model and a corpus."""

from __future__ import annotations

from .data import Corpus
from .metrics import (
    DegenerateInputError,
    EvalReport,
    auc,
    mean_average_precision,
    pearson,
    per_class_spearman,
    router_accuracy,
    spearman,
)
from .model import SimilarityModel


def build_eval_report(model: SimilarityModel, corpus: Corpus, rerank_queries=None) -> EvalReport:
    """Ranking and classification metrics on one corpus.

    Degenerate metrics (constant predictions, single-class data, ...)
    are reported as None with an explanatory note rather than failing
    the whole evaluation.
    """
    report = EvalReport(n_pairs=len(corpus.pairs), param_count=model.param_count())
    preds = [model.predict(p) for p in corpus.pairs]
    golds = [p.gold_score for p in corpus.pairs]
    upper_mask = [p.gold_score >= 4.0 for p in corpus.pairs]

    try:
        report.spearman_overall = spearman(preds, golds)
    except DegenerateInputError as e:
        report.notes.append(f"spearman_overall undefined: {e}")
    try:
        report.pearson = pearson(preds, golds)
    except DegenerateInputError as e:
        report.notes.append(f"pearson undefined: {e}")

    per_class = per_class_spearman(preds, golds, upper_mask)
    report.spearman_upper = per_class.upper
    report.spearman_lower = per_class.lower
    if per_class.upper is None:
        report.notes.append("spearman_upper undefined: degenerate upper-class subset")
    if per_class.lower is None:
        report.notes.append("spearman_lower undefined: degenerate lower-class subset")

    if model.head.k >= 2:
        chosen = [model.routing_bins(p) for p in corpus.pairs]
        gold_bins = [model.config.bins.bin_of(p.gold_score) for p in corpus.pairs]
        acc = router_accuracy(chosen, gold_bins)
        if acc is not None:
            report.router_accuracy = acc.sentences
            report.router_accuracy_pairs = acc.pairs
    else:
        report.notes.append("router accuracy not defined for a single-projector head")

    try:
        report.auc = auc(preds, [1 if u else 0 for u in upper_mask])
    except DegenerateInputError as e:
        report.notes.append(f"auc undefined: {e}")

    if rerank_queries is not None:
        result = mean_average_precision(rerank_queries)
        report.map = result.value
        report.map_skipped_queries = result.skipped
    return report
