"""Full similarity model: an encoder plus the classify-and-rank head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor
from .data import Corpus, SentencePair
from .encoders import FrozenEncoder, SyntheticEncoder, ToyEncoder
from .head import (
    HeadConfig,
    HeadParams,
    SampleForward,
    batch_loss,
    forward_sample,
    sample_loss,
)


@dataclass
class SimilarityModel:
    encoder: ToyEncoder | FrozenEncoder | SyntheticEncoder
    head: HeadParams
    config: HeadConfig
    dim: int

    def forward(self, tape: Tape, pair: SentencePair) -> SampleForward:
        return forward_sample(tape, self.encoder, self.head, self.config, pair)

    def loss(self, tape: Tape, pair: SentencePair) -> Tensor:
        return sample_loss(tape, self.encoder, self.head, self.config, pair)

    def batch_loss(self, tape: Tape, pairs: list[SentencePair]) -> Tensor:
        return batch_loss(tape, self.encoder, self.head, self.config, pairs)

    def predict(self, pair: SentencePair) -> float:
        """Similarity output on a throwaway tape (no gradients kept)."""
        return self.forward(Tape(), pair).pred.item()

    def routing_bins(self, pair: SentencePair) -> tuple[int, int]:
        return self.forward(Tape(), pair).decision.chosen

    def pair_vectors(self, pair: SentencePair, space: str = "projected") -> tuple[np.ndarray, np.ndarray]:
        """The two per-sentence vectors used for embedding-space analysis.

        `projected` is the model's output space (the projected vectors);
        `encoder` bypasses the head and returns the contextual vectors.
        """
        fw = self.forward(Tape(), pair)
        if space == "projected":
            return fw.projected.vec1.values.copy(), fw.projected.vec2.values.copy()
        if space == "encoder":
            return fw.encoded.sent1.values.copy(), fw.encoded.sent2.values.copy()
        raise ValueError(f"pair_vectors: unknown space '{space}' (expected 'projected' or 'encoder')")

    def named_params(self) -> dict[str, Tensor]:
        out = dict(self.encoder.named_params())
        out.update(self.head.named_params())
        return out

    def trainable_params(self) -> dict[str, Tensor]:
        out = dict(self.encoder.trainable_params())
        out.update(self.head.named_params())
        return out

    def param_count(self) -> dict[str, int]:
        """Trainable scalar counts broken down by component."""
        counts = {"encoder": 0, "router": 0, "projectors": 0, "scorer": 0}
        for t in self.encoder.trainable_params().values():
            counts["encoder"] += t.values.size
        for name, t in self.head.named_params().items():
            if name.startswith("router."):
                counts["router"] += t.values.size
            elif name.startswith("projector"):
                counts["projectors"] += t.values.size
            else:
                counts["scorer"] += t.values.size
        counts["total"] = sum(counts.values())
        return counts


def build_model(
    dim: int,
    config: HeadConfig,
    seed: int,
    vocab_size: int | None = None,
    encoder_kind: str = "toy",
    trainable_encoder: bool = True,
    frozen_store: FrozenEncoder | None = None,
    latents: np.ndarray | None = None,
) -> SimilarityModel:
    """Construct a freshly initialized model.

    Parameter creation order is fixed (encoder first, then head), so a
    given seed always produces bit-identical initial weights.
    """
    rng = np.random.default_rng(seed)
    if encoder_kind == "toy":
        if vocab_size is None:
            raise ValueError("build_model: the toy encoder needs vocab_size")
        encoder = ToyEncoder.init(dim, vocab_size, rng, trainable=trainable_encoder)
    elif encoder_kind == "frozen":
        if frozen_store is None:
            raise ValueError("build_model: the frozen encoder needs a loaded store")
        if frozen_store.dim != dim:
            raise ValueError(f"build_model: store dimension {frozen_store.dim} does not match model dimension {dim}")
        encoder = frozen_store
    elif encoder_kind == "synthetic":
        if latents is None:
            raise ValueError("build_model: the synthetic encoder needs latents")
        encoder = SyntheticEncoder(latents)
        if encoder.dim != dim:
            raise ValueError(f"build_model: latent dimension {encoder.dim} does not match model dimension {dim}")
    else:
        raise ValueError(f"build_model: unknown encoder kind '{encoder_kind}'")
    head = HeadParams.init(dim, config, rng)
    return SimilarityModel(encoder=encoder, head=head, config=config, dim=dim)


def collect_predictions(model: SimilarityModel, corpus: Corpus) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Predictions, gold scores, and gold bins (by the model's scheme)."""
    preds = np.array([model.predict(p) for p in corpus.pairs])
    golds = np.array([p.gold_score for p in corpus.pairs])
    bins = [model.config.bins.bin_of(p.gold_score) for p in corpus.pairs]
    return preds, golds, bins
