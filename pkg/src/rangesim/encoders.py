"""Sentence-pair encoders producing a (joint, sent1, sent2) vector triple.

Three interchangeable implementations sit behind the same contract:
a trainable bag-of-embeddings encoder, a frozen file-backed store of
precomputed triples, and a test double that emits the synthetic
generator's latent directions directly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .data import SentencePair


@dataclass
class EncodedPair:
    """The triple of d-vectors for one sentence pair.

    `joint` summarizes both sentences together; `sent1` and `sent2` are
    the per-sentence contextual representations.
    """

    joint: Tensor
    sent1: Tensor
    sent2: Tensor

    @property
    def dim(self) -> int:
        return self.joint.shape[0]


def uniform_linear_init(rng: np.random.Generator, out_dim: int, in_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric uniform init with bound 1/sqrt(fan_in) for weight and bias."""
    bound = 1.0 / math.sqrt(in_dim)
    weight = rng.uniform(-bound, bound, size=(out_dim, in_dim))
    bias = rng.uniform(-bound, bound, size=out_dim)
    return weight, bias


class ToyEncoder:
    """Bag-of-embeddings encoder with a shared dense mixer.

    Per sentence j: m_j = mean of embedding rows, then
    sent_j = tanh(mix_w @ m_j + mix_b). The joint vector reads both
    sentences: joint = tanh(sum_w @ (m_1 + m_2) + sum_b), so gradients
    from every loss term reach shared encoder parameters when the
    encoder is trainable.
    """

    kind = "toy"

    def __init__(self, embed: Tensor, mix_w: Tensor, mix_b: Tensor, sum_w: Tensor, sum_b: Tensor, trainable: bool = True):
        self.embed = embed
        self.mix_w = mix_w
        self.mix_b = mix_b
        self.sum_w = sum_w
        self.sum_b = sum_b
        self.trainable = bool(trainable)
        for t in (embed, mix_w, mix_b, sum_w, sum_b):
            t.requires_grad = self.trainable

    @classmethod
    def init(cls, dim: int, vocab_size: int, rng: np.random.Generator, trainable: bool = True) -> "ToyEncoder":
        embed = rng.normal(size=(vocab_size, dim))
        embed /= np.linalg.norm(embed, axis=1, keepdims=True)
        mix_w, mix_b = uniform_linear_init(rng, dim, dim)
        sum_w, sum_b = uniform_linear_init(rng, dim, dim)
        return cls(
            Tensor(embed),
            Tensor(mix_w),
            Tensor(mix_b),
            Tensor(sum_w),
            Tensor(sum_b),
            trainable=trainable,
        )

    @property
    def dim(self) -> int:
        return self.embed.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0]

    def encode(self, tape: Tape, pair: SentencePair) -> EncodedPair:
        m1 = ad.mean_pool(tape, ad.gather_rows(tape, self.embed, pair.sent1))
        m2 = ad.mean_pool(tape, ad.gather_rows(tape, self.embed, pair.sent2))
        s1 = ad.tanh(tape, ad.linear(tape, self.mix_w, self.mix_b, m1))
        s2 = ad.tanh(tape, ad.linear(tape, self.mix_w, self.mix_b, m2))
        joint = ad.tanh(tape, ad.linear(tape, self.sum_w, self.sum_b, ad.add(tape, m1, m2)))
        return EncodedPair(joint=joint, sent1=s1, sent2=s2)

    def named_params(self) -> dict[str, Tensor]:
        return {
            "encoder.embed": self.embed,
            "encoder.mix.weight": self.mix_w,
            "encoder.mix.bias": self.mix_b,
            "encoder.sum.weight": self.sum_w,
            "encoder.sum.bias": self.sum_b,
        }

    def trainable_params(self) -> dict[str, Tensor]:
        return self.named_params() if self.trainable else {}


class FrozenEncoderError(RuntimeError):
    """The frozen store is missing a record or disagrees on dimension."""


class FrozenEncoder:
    """File-backed store of precomputed (joint, sent1, sent2) triples.

    The store is JSON-lines, one record per pair:
    {"id": str, "cls": [floats], "x1": [floats], "x2": [floats]}.
    Lookups return the stored values verbatim as constants, so gradients
    never flow into the store.
    """

    kind = "frozen"

    def __init__(self, records: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]], dim: int, store_path: str | None = None):
        self.records = records
        self._dim = dim
        self.store_path = store_path

    @classmethod
    def load(cls, path, expected_dim: int | None = None) -> "FrozenEncoder":
        records: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        dim: int | None = None
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as e:
                    raise FrozenEncoderError(f"{path}:{lineno}: invalid JSON record: {e}") from None
                try:
                    pid = str(obj["id"])
                    triple = tuple(np.asarray(obj[k], dtype=np.float64) for k in ("cls", "x1", "x2"))
                except KeyError as e:
                    raise FrozenEncoderError(f"{path}:{lineno}: missing field {e}") from None
                dims = {v.shape for v in triple}
                if len(dims) != 1 or triple[0].ndim != 1:
                    raise FrozenEncoderError(f"{path}:{lineno}: inconsistent vector shapes {sorted(dims)}")
                d = triple[0].shape[0]
                if dim is None:
                    dim = d
                elif d != dim:
                    raise FrozenEncoderError(f"{path}:{lineno}: dimension {d} differs from earlier records ({dim})")
                records[pid] = triple
        if dim is None:
            raise FrozenEncoderError(f"{path}: store is empty")
        if expected_dim is not None and dim != expected_dim:
            raise FrozenEncoderError(f"{path}: store dimension {dim} does not match model dimension {expected_dim}")
        return cls(records, dim, store_path=str(path))

    @staticmethod
    def write(path, records: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for pid, (cls_vec, x1, x2) in records.items():
                f.write(
                    json.dumps(
                        {
                            "id": pid,
                            "cls": [float(v) for v in cls_vec],
                            "x1": [float(v) for v in x1],
                            "x2": [float(v) for v in x2],
                        }
                    )
                    + "\n"
                )

    @property
    def dim(self) -> int:
        return self._dim

    def encode(self, tape: Tape, pair: SentencePair) -> EncodedPair:
        if pair.pair_id not in self.records:
            raise FrozenEncoderError(f"frozen store has no record for pair id '{pair.pair_id}'")
        cls_vec, x1, x2 = self.records[pair.pair_id]
        return EncodedPair(joint=ad.constant(cls_vec), sent1=ad.constant(x1), sent2=ad.constant(x2))

    def named_params(self) -> dict[str, Tensor]:
        return {}

    def trainable_params(self) -> dict[str, Tensor]:
        return {}


class SyntheticEncoder:
    """Test double that emits the generator's latent directions directly.

    The joint vector is the normalized midpoint of the two latents (the
    first latent if the midpoint degenerates). Never differentiable.
    """

    kind = "synthetic"

    def __init__(self, latents: np.ndarray):
        if latents.ndim != 3 or latents.shape[1] != 2:
            raise ValueError(f"SyntheticEncoder: latents must have shape (n, 2, dim), got {latents.shape}")
        self.latents = latents

    @property
    def dim(self) -> int:
        return self.latents.shape[2]

    def encode(self, tape: Tape, pair: SentencePair) -> EncodedPair:
        i = int(pair.pair_id)
        l1 = self.latents[i, 0]
        l2 = self.latents[i, 1]
        mid = l1 + l2
        norm = np.linalg.norm(mid)
        joint = mid / norm if norm > 1e-12 else l1.copy()
        return EncodedPair(joint=ad.constant(joint), sent1=ad.constant(l1), sent2=ad.constant(l2))

    def named_params(self) -> dict[str, Tensor]:
        return {}

    def trainable_params(self) -> dict[str, Tensor]:
        return {}
