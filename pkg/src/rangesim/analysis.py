"""Embedding-space diagnostics.

Covers the density overlap between upper- and lower-range cosine
similarity distributions (Gaussian KDE, Silverman bandwidth), the
alignment and uniformity statistics of normalized embeddings, and a
word n-gram Jaccard auditor for train/test contamination.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

GRID_POINTS = 4096
BANDWIDTH_FLOOR = 1e-3


class DiagnosticError(ValueError):
    """Inputs are too degenerate for the requested diagnostic."""


@dataclass
class SimilaritySample:
    cosine: float
    is_upper: bool


@dataclass
class DensityGrid:
    """Shared evaluation grid with one density per class.

    Each density integrates to 1 over the grid to within 1e-3 by the
    trapezoid rule (the grid extends five bandwidths past the data).
    """

    xs: np.ndarray
    f_upper: np.ndarray
    f_lower: np.ndarray
    bandwidth_upper: float
    bandwidth_lower: float


def cosine_samples(model, corpus, space: str = "projected") -> tuple[list[SimilaritySample], int]:
    """Within-pair cosine per pair, labeled by the gold range class.

    Pairs with a zero-norm vector are skipped; the count of skips is
    returned alongside the samples. The class is always the default
    two-way split (top bin = upper), regardless of the model's scheme.
    """
    samples = []
    skipped = 0
    for pair in corpus.pairs:
        v1, v2 = model.pair_vectors(pair, space=space)
        n1 = np.linalg.norm(v1)
        n2 = np.linalg.norm(v2)
        if n1 == 0.0 or n2 == 0.0:
            skipped += 1
            continue
        samples.append(
            SimilaritySample(
                cosine=float(np.dot(v1, v2) / (n1 * n2)),
                is_upper=pair.gold_score >= 4.0,
            )
        )
    if skipped:
        warnings.warn(f"cosine_samples: skipped {skipped} pair(s) with zero-norm vectors")
    return samples, skipped


def silverman_bandwidth(x: np.ndarray) -> float:
    """h = 0.9 * min(std, IQR/1.34) * n^(-1/5), floored at 1e-3."""
    x = np.asarray(x, dtype=np.float64)
    std = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    spread = min(std, iqr / 1.34)
    return max(0.9 * spread * x.size ** (-0.2), BANDWIDTH_FLOOR)


def _kde(x: np.ndarray, grid: np.ndarray, h: float) -> np.ndarray:
    z = (grid[:, None] - x[None, :]) / h
    return np.exp(-0.5 * z * z).sum(axis=1) / (x.size * h * np.sqrt(2.0 * np.pi))


def kde_overlap(upper: Sequence[float], lower: Sequence[float]) -> tuple[float, DensityGrid]:
    """Overlap area between the two classes' Gaussian KDEs.

    Both densities are evaluated on a shared 4096-point grid spanning
    [min - 5*h_max, max + 5*h_max] over the pooled samples; the overlap
    is the trapezoid integral of the pointwise minimum, a value in [0, 1].
    """
    u = np.asarray(upper, dtype=np.float64)
    l = np.asarray(lower, dtype=np.float64)
    for name, arr in (("upper", u), ("lower", l)):
        if arr.size < 2:
            raise DiagnosticError(f"kde_overlap: class '{name}' has {arr.size} sample(s), need >= 2")
        if float(np.ptp(arr)) == 0.0:
            raise DiagnosticError(f"kde_overlap: class '{name}' has zero variance")
    hu = silverman_bandwidth(u)
    hl = silverman_bandwidth(l)
    hmax = max(hu, hl)
    lo = min(u.min(), l.min()) - 5.0 * hmax
    hi = max(u.max(), l.max()) + 5.0 * hmax
    xs = np.linspace(lo, hi, GRID_POINTS)
    fu = _kde(u, xs, hu)
    fl = _kde(l, xs, hl)
    overlap = float(np.trapz(np.minimum(fu, fl), xs))
    return overlap, DensityGrid(xs=xs, f_upper=fu, f_lower=fl, bandwidth_upper=hu, bandwidth_lower=hl)


def _normalize_rows(vecs: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DiagnosticError("zero-norm embedding")
    return vecs / norms


def alignment(positive_pairs: Iterable[tuple[np.ndarray, np.ndarray]]) -> float:
    """Mean squared distance between L2-normalized positive-pair embeddings."""
    pairs = list(positive_pairs)
    if not pairs:
        raise DiagnosticError("alignment: need at least one positive pair")
    a = _normalize_rows(np.asarray([p[0] for p in pairs], dtype=np.float64))
    b = _normalize_rows(np.asarray([p[1] for p in pairs], dtype=np.float64))
    return float(np.mean(np.sum((a - b) ** 2, axis=1)))


def uniformity(embeddings: Sequence[np.ndarray]) -> float:
    """log mean over unordered distinct pairs of exp(-2 * ||x - y||^2).

    Always <= 0 for normalized embeddings, with equality only when all
    embeddings coincide.
    """
    vecs = np.asarray(list(embeddings), dtype=np.float64)
    if vecs.shape[0] < 2:
        raise DiagnosticError(f"uniformity: need >= 2 embeddings, got {vecs.shape[0]}")
    vecs = _normalize_rows(vecs)
    sq = np.sum(vecs * vecs, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (vecs @ vecs.T)
    iu = np.triu_indices(vecs.shape[0], k=1)
    return float(np.log(np.mean(np.exp(-2.0 * np.clip(d2[iu], 0.0, None)))))


def word_ngrams(sentences: Iterable[str], n: int) -> set[tuple[str, ...]]:
    """Set of lowercase word n-grams over whitespace tokens."""
    if n < 1:
        raise ValueError(f"word_ngrams: n must be >= 1, got {n}")
    grams: set[tuple[str, ...]] = set()
    for sent in sentences:
        toks = sent.lower().split()
        for i in range(len(toks) - n + 1):
            grams.add(tuple(toks[i : i + n]))
    return grams


def ngram_jaccard(sents_a: Iterable[str], sents_b: Iterable[str], n: int) -> float:
    """Jaccard similarity of the two corpora's word n-gram sets.

    Sentences shorter than n contribute nothing; two empty sets are
    defined as similarity 0 (with a warning).
    """
    a = word_ngrams(sents_a, n)
    b = word_ngrams(sents_b, n)
    if not a and not b:
        warnings.warn(f"ngram_jaccard: both corpora have no {n}-grams; returning 0.0")
        return 0.0
    return len(a & b) / len(a | b)


def write_density_csv(grid: DensityGrid, path) -> None:
    """Density grid as `x,f_upper,f_lower` rows (header + 4096 rows)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("x,f_upper,f_lower\n")
        for x, fu, fl in zip(grid.xs, grid.f_upper, grid.f_lower):
            f.write(f"{x!r},{fu!r},{fl!r}\n")
