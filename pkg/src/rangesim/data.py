"""Corpus handling: TSV I/O, score-range labeling, synthetic pair generation.

Gold similarity scores live on the conventional [0, 5] scale. A
:class:`BinScheme` partitions that scale into ordered ranges; bin 0 is
always the top (most similar) range, which for the default two-way
scheme means scores in [4, 5].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_EDGES = (0.0, 4.0, 5.0)
SCORE_MAX = 5.0


class ParseError(ValueError):
    """A corpus file is malformed; the message carries file and line."""


@dataclass(frozen=True)
class BinScheme:
    """Ordered half-open ranges covering [0, 5]; the last range is closed.

    `edges` are strictly increasing thresholds from 0.0 to 5.0. Bins are
    numbered from the top: bin 0 is [edges[-2], 5], bin k-1 is
    [0, edges[1]).
    """

    edges: tuple[float, ...] = DEFAULT_EDGES

    def __post_init__(self):
        e = tuple(float(x) for x in self.edges)
        object.__setattr__(self, "edges", e)
        if len(e) < 3:
            raise ValueError(f"BinScheme: need at least 2 bins, got edges {e}")
        if e[0] != 0.0 or e[-1] != SCORE_MAX:
            raise ValueError(f"BinScheme: edges must span [0, {SCORE_MAX}], got {e}")
        if any(a >= b for a, b in zip(e, e[1:])):
            raise ValueError(f"BinScheme: edges must be strictly increasing, got {e}")

    @property
    def k(self) -> int:
        return len(self.edges) - 1

    def bin_of(self, score: float) -> int:
        """Bin index for a score; 0 is the top range. Score 5.0 maps to bin 0."""
        if not 0.0 <= score <= SCORE_MAX:
            raise ValueError(f"BinScheme: score {score} outside [0, {SCORE_MAX}]")
        j = int(np.searchsorted(self.edges, score, side="right")) - 1
        j = min(j, self.k - 1)
        return self.k - 1 - j

    def label(self, b: int) -> str:
        if self.k == 2:
            return "upper" if b == 0 else "lower"
        return f"bin{b}"

    def to_list(self) -> list[float]:
        return list(self.edges)

    @classmethod
    def from_list(cls, edges) -> "BinScheme":
        return cls(tuple(edges))


@dataclass
class SentencePair:
    """Two token-id sequences with a gold score and derived labels."""

    sent1: list[int]
    sent2: list[int]
    gold_score: float
    pair_id: str
    class_bin: int
    target: float  # gold_score / 5, the normalized similarity target

    @property
    def is_upper(self) -> bool:
        return self.class_bin == 0


@dataclass
class Corpus:
    name: str
    vocab: list[str]
    pairs: list[SentencePair]
    scheme: BinScheme = field(default_factory=BinScheme)
    meta: dict = field(default_factory=dict)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def __len__(self) -> int:
        return len(self.pairs)


def _make_pair(sent1: list[int], sent2: list[int], score: float, pair_id: str, scheme: BinScheme) -> SentencePair:
    return SentencePair(
        sent1=sent1,
        sent2=sent2,
        gold_score=score,
        pair_id=pair_id,
        class_bin=scheme.bin_of(score),
        target=score / SCORE_MAX,
    )


# ---------------------------------------------------------------------------
# TSV + vocabulary + metadata files
# ---------------------------------------------------------------------------


def load_vocab(path) -> list[str]:
    """One token per line; line number = token id."""
    with open(path, "r", encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def save_vocab(vocab: list[str], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for tok in vocab:
            f.write(tok + "\n")


def load_tsv(path, vocab: list[str] | None = None, scheme: BinScheme | None = None, name: str | None = None) -> Corpus:
    """Read `sent1<TAB>sent2<TAB>score` records into a labeled corpus.

    Tokenization is whitespace split. With an explicit vocabulary,
    unknown tokens are an error; without one, the vocabulary is built in
    order of first appearance.
    """
    scheme = scheme or BinScheme()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"corpus file not found: {path}")
    build_vocab = vocab is None
    tok_to_id: dict[str, int] = {}
    if vocab is not None:
        tok_to_id = {tok: i for i, tok in enumerate(vocab)}
    vocab_out: list[str] = list(vocab) if vocab is not None else []

    def encode(sent: str, lineno: int, col: str) -> list[int]:
        toks = sent.split()
        if not toks:
            raise ParseError(f"{path}:{lineno}: empty {col}")
        ids = []
        for tok in toks:
            if tok not in tok_to_id:
                if build_vocab:
                    tok_to_id[tok] = len(vocab_out)
                    vocab_out.append(tok)
                else:
                    raise ParseError(f"{path}:{lineno}: token '{tok}' not in vocabulary")
            ids.append(tok_to_id[tok])
        return ids

    pairs: list[SentencePair] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 tab-separated columns, got {len(cols)}")
            try:
                score = float(cols[2])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: score '{cols[2]}' is not a decimal number") from None
            if not 0.0 <= score <= SCORE_MAX:
                raise ParseError(f"{path}:{lineno}: score {score} outside [0, {SCORE_MAX}]")
            s1 = encode(cols[0], lineno, "sent1")
            s2 = encode(cols[1], lineno, "sent2")
            pairs.append(_make_pair(s1, s2, score, str(len(pairs)), scheme))
    return Corpus(name=name or path.stem, vocab=vocab_out, pairs=pairs, scheme=scheme)


def save_tsv(corpus: Corpus, path) -> None:
    """Write the corpus in the same `sent1<TAB>sent2<TAB>score` format."""
    with open(path, "w", encoding="utf-8") as f:
        for p in corpus.pairs:
            s1 = " ".join(corpus.vocab[i] for i in p.sent1)
            s2 = " ".join(corpus.vocab[i] for i in p.sent2)
            f.write(f"{s1}\t{s2}\t{p.gold_score!r}\n")


def write_meta(meta: dict, path) -> None:
    """Sidecar metadata as `key=value` lines."""
    with open(path, "w", encoding="utf-8") as f:
        for key in sorted(meta):
            f.write(f"{key}={meta[key]}\n")


def read_meta(path) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if line:
                key, _, value = line.partition("=")
                out[key] = value
    return out


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------


def score_from_cosine(c: float) -> float:
    """Noise-free gold score for a latent cosine: clip(5*(0.5 + 0.5*c), 0, 5)."""
    return float(np.clip(2.5 + 2.5 * c, 0.0, SCORE_MAX))


def _unit_orthogonal(rng: np.random.Generator, dim: int, *basis: np.ndarray) -> np.ndarray:
    """A random unit vector orthogonal to every vector in `basis`."""
    while True:
        g = rng.normal(size=dim)
        for b in basis:
            g -= np.dot(g, b) * b
        norm = np.linalg.norm(g)
        if norm > 1e-9:
            return g / norm


def _sample_sentence(rng: np.random.Generator, token_dirs: np.ndarray, direction: np.ndarray) -> list[int]:
    """Tokens whose latent mean approximates `direction`: the best-aligned
    vocabulary entries, at a length drawn per sentence."""
    length = int(rng.integers(12, 25))
    return [int(t) for t in np.argsort(-(token_dirs @ direction))[:length]]


def synth_corpus(
    n_pairs: int,
    dim: int,
    vocab_size: int,
    seed: int,
    noise: float = 0.15,
    name: str = "synth",
) -> tuple[Corpus, np.ndarray]:
    """Generate a deterministic synthetic similarity corpus.

    Construction: `vocab_size` random unit vectors act as latent token
    directions, with a quarter of them replaced by register tokens that
    lean strongly along a fixed anchor axis. Pair i alternates between a
    high-similarity and a low-similarity regime; the two latent sentence
    directions are built with a controlled angle, and the gold score is
    clip(5*(0.5 + 0.5*cos(l1, l2)) + N(0, noise), 0, 5).

    Both latent directions of a pair share an anchor component whose
    size tracks the target cosine, with a gap between the two regimes.
    Together with the register tokens this keeps the range classes
    linearly separable from the token statistics (so the routing task is
    learnable by construction) while the residual geometry carries the
    fine-grained ranking signal.

    Returns the corpus plus the latent directions, shape (n_pairs, 2, dim),
    for use by the synthetic encoder and oracle checks.
    """
    if n_pairs < 2:
        raise ValueError(f"synth_corpus: n_pairs must be >= 2, got {n_pairs}")
    if dim < 2:
        raise ValueError(f"synth_corpus: dim must be >= 2, got {dim}")
    if vocab_size < dim:
        raise ValueError(f"synth_corpus: vocab_size must be >= dim, got {vocab_size} < {dim}")
    if noise < 0:
        raise ValueError(f"synth_corpus: noise must be >= 0, got {noise}")

    rng = np.random.default_rng(seed)
    axis = np.zeros(dim)
    axis[0] = 1.0
    token_dirs = rng.normal(size=(vocab_size, dim))
    token_dirs /= np.linalg.norm(token_dirs, axis=1, keepdims=True)
    for r in range(vocab_size // 4):
        sign = 1.0 if r % 2 == 0 else -1.0
        perp = _unit_orthogonal(rng, dim, axis)
        token_dirs[r] = sign * 0.9 * axis + math.sqrt(1.0 - 0.81) * perp

    scheme = BinScheme()
    latents = np.empty((n_pairs, 2, dim))
    pairs: list[SentencePair] = []
    for i in range(n_pairs):
        if i % 2 == 0:
            c = float(rng.uniform(0.75, 1.0))
            anchor = 0.60 + 0.10 * (c - 0.75) / 0.25
        else:
            c = float(rng.uniform(-0.8, 0.4))
            anchor = 0.25 * (c + 0.8) / 1.2
        # cos(l1, l2) = anchor^2 + (1 - anchor^2) * cos(v1, v2) must equal c
        cos_v = (c - anchor * anchor) / (1.0 - anchor * anchor)
        cos_v = float(np.clip(cos_v, -1.0, 1.0))
        v1 = _unit_orthogonal(rng, dim, axis)
        w = _unit_orthogonal(rng, dim, axis, v1)
        v2 = cos_v * v1 + math.sqrt(max(0.0, 1.0 - cos_v * cos_v)) * w
        tail = math.sqrt(1.0 - anchor * anchor)
        l1 = anchor * axis + tail * v1
        l2 = anchor * axis + tail * v2
        latents[i, 0] = l1
        latents[i, 1] = l2
        gold = float(np.clip(score_from_cosine(float(np.dot(l1, l2))) + rng.normal(0.0, noise), 0.0, SCORE_MAX))
        s1 = _sample_sentence(rng, token_dirs, l1)
        s2 = _sample_sentence(rng, token_dirs, l2)
        pairs.append(_make_pair(s1, s2, gold, str(i), scheme))

    vocab = [f"t{v:04d}" for v in range(vocab_size)]
    meta = {
        "name": name,
        "seed": seed,
        "dim": dim,
        "vocab_size": vocab_size,
        "noise": noise,
        "n_pairs": n_pairs,
    }
    return Corpus(name=name, vocab=vocab, pairs=pairs, scheme=scheme, meta=meta), latents


def split(corpus: Corpus, fractions: tuple[float, ...], seed: int) -> list[Corpus]:
    """Deterministic shuffled split into len(fractions) disjoint parts."""
    if not fractions or any(f <= 0 for f in fractions):
        raise ValueError(f"split: fractions must be positive, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split: fractions must sum to 1, got {fractions}")
    n = len(corpus.pairs)
    perm = np.random.default_rng(seed).permutation(n)
    bounds = [0]
    acc = 0.0
    for f in fractions:
        acc += f
        bounds.append(int(round(acc * n)))
    bounds[-1] = n
    out = []
    suffixes = ("train", "dev", "test")
    for j in range(len(fractions)):
        idx = perm[bounds[j] : bounds[j + 1]]
        part = [corpus.pairs[i] for i in idx]
        suffix = suffixes[j] if j < len(suffixes) else f"part{j}"
        out.append(
            Corpus(
                name=f"{corpus.name}-{suffix}",
                vocab=corpus.vocab,
                pairs=part,
                scheme=corpus.scheme,
                meta=dict(corpus.meta),
            )
        )
    return out
