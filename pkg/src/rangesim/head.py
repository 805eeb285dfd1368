"""Classify-and-rank head: router, per-range projectors, supervised scorer.

Each sentence representation is routed to a score-range bin by a linear
router over a softmax. Under hard selection only the argmax bin's
projector is applied, scaled by the winning probability (the gate), so
that the selection confidence stays on the gradient path even though
the branch choice itself is not differentiated. Soft selection
(probability-weighted sum over all projectors) is kept as the
mixture-of-experts comparator.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .data import BinScheme, SentencePair
from .encoders import EncodedPair, uniform_linear_init


class Selection(str, Enum):
    ARGMAX = "argmax"
    WEIGHTED_AVERAGE = "weighted_average"


class RouterInput(str, Enum):
    CLS_PLUS_CTX = "cls_plus_ctx"  # joint + per-sentence vector (elementwise)
    CTX_ONLY = "ctx_only"  # per-sentence vector alone
    PAIR_CTX = "pair_ctx"  # sent1 + sent2, fed identically to both sentences


class Objective(str, Enum):
    BCE = "bce"
    COSINE_MSE = "cosine_mse"


@dataclass(frozen=True)
class HeadConfig:
    """Head layout and loss weights.

    `bins.k` fixes the number of projectors. k = 1 is the degenerate
    single-projector layout used by the plain fine-tuning baseline: no
    router or scorer exists, routing is trivial, and the objective must
    be cosine regression.
    """

    bins: BinScheme = field(default_factory=BinScheme)
    selection: Selection = Selection.ARGMAX
    router_input: RouterInput = RouterInput.CLS_PLUS_CTX
    objective: Objective = Objective.BCE
    rank_loss_weight: float = 7e-4
    clf_loss_weight: float = 1e-4
    use_clf_loss: bool = True
    single_projector: bool = False  # k=1 layout; bins still label the data

    def __post_init__(self):
        if self.rank_loss_weight < 0 or self.clf_loss_weight < 0:
            raise ValueError("HeadConfig: loss weights must be >= 0")
        if self.single_projector:
            if self.use_clf_loss:
                raise ValueError("HeadConfig: classification loss needs at least 2 bins")
            if self.objective is not Objective.COSINE_MSE:
                raise ValueError("HeadConfig: the single-projector layout has no scorer; use the cosine objective")

    @property
    def k(self) -> int:
        return 1 if self.single_projector else self.bins.k

    def to_dict(self) -> dict:
        return {
            "bins": self.bins.to_list(),
            "selection": self.selection.value,
            "router_input": self.router_input.value,
            "objective": self.objective.value,
            "rank_loss_weight": self.rank_loss_weight,
            "clf_loss_weight": self.clf_loss_weight,
            "use_clf_loss": self.use_clf_loss,
            "single_projector": self.single_projector,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HeadConfig":
        return cls(
            bins=BinScheme.from_list(d["bins"]),
            selection=Selection(d["selection"]),
            router_input=RouterInput(d["router_input"]),
            objective=Objective(d["objective"]),
            rank_loss_weight=float(d["rank_loss_weight"]),
            clf_loss_weight=float(d["clf_loss_weight"]),
            use_clf_loss=bool(d["use_clf_loss"]),
            single_projector=bool(d.get("single_projector", False)),
        )


# Router weights start at zero so the bins begin equiprobable and the
# decision boundary is carved purely by accumulated gradient, not by the
# luck of a random draw; see decision notes. All other layers use the
# symmetric uniform init.
ROUTER_INIT_ZERO = True


@dataclass
class HeadParams:
    """Parameter tensors for the head; router/scorer absent when k = 1."""

    router_w: Tensor | None
    router_b: Tensor | None
    projectors: list[tuple[Tensor, Tensor]]
    scorer_w: Tensor | None
    scorer_b: Tensor | None

    @classmethod
    def init(cls, dim: int, config: HeadConfig, rng: np.random.Generator) -> "HeadParams":
        k = config.k
        if k >= 2:
            if ROUTER_INIT_ZERO:
                rw, rb = np.zeros((k, dim)), np.zeros(k)
            else:
                rw, rb = uniform_linear_init(rng, k, dim)
            router_w, router_b = Tensor(rw, True), Tensor(rb, True)
        else:
            router_w = router_b = None
        projectors = []
        for _ in range(k):
            w, b = uniform_linear_init(rng, dim, dim)
            projectors.append((Tensor(w, True), Tensor(b, True)))
        if config.objective is Objective.BCE:
            sw, sb = uniform_linear_init(rng, 1, 2 * dim)
            scorer_w, scorer_b = Tensor(sw, True), Tensor(sb, True)
        else:
            scorer_w = scorer_b = None
        return cls(router_w, router_b, projectors, scorer_w, scorer_b)

    @property
    def k(self) -> int:
        return len(self.projectors)

    def named_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.router_w is not None:
            out["router.weight"] = self.router_w
            out["router.bias"] = self.router_b
        for c, (w, b) in enumerate(self.projectors):
            out[f"projector{c}.weight"] = w
            out[f"projector{c}.bias"] = b
        if self.scorer_w is not None:
            out["scorer.weight"] = self.scorer_w
            out["scorer.bias"] = self.scorer_b
        return out


@dataclass
class RouteDecision:
    """Per-sentence routing distributions, chosen bins, and gates.

    `gate[j]` is the winning probability max(probs[j]) as a scalar
    tensor, so it stays differentiable; `chosen[j]` is the argmax index
    with ties broken toward the lower (more similar) bin.
    """

    probs: tuple[Tensor, Tensor]
    chosen: tuple[int, int]
    gate: tuple[Tensor, Tensor]


@dataclass
class ProjectedPair:
    vec1: Tensor
    vec2: Tensor
    decision: RouteDecision


def routing_inputs(tape: Tape, config: HeadConfig, enc: EncodedPair) -> tuple[Tensor, Tensor]:
    if config.router_input is RouterInput.CLS_PLUS_CTX:
        return ad.add(tape, enc.joint, enc.sent1), ad.add(tape, enc.joint, enc.sent2)
    if config.router_input is RouterInput.CTX_ONLY:
        return enc.sent1, enc.sent2
    both = ad.add(tape, enc.sent1, enc.sent2)
    return both, both


def route(tape: Tape, params: HeadParams, config: HeadConfig, enc: EncodedPair) -> RouteDecision:
    """Assign each sentence a bin distribution, argmax choice, and gate."""
    if params.k == 1:
        one = ad.constant(np.ones(1))
        gate = ad.constant(np.asarray(1.0))
        return RouteDecision(probs=(one, one), chosen=(0, 0), gate=(gate, gate))
    r1, r2 = routing_inputs(tape, config, enc)
    probs = []
    chosen = []
    gates = []
    for r in (r1, r2):
        p = ad.softmax(tape, ad.linear(tape, params.router_w, params.router_b, r))
        c = int(np.argmax(p.values))
        probs.append(p)
        chosen.append(c)
        gates.append(ad.index(tape, p, c))
    return RouteDecision(probs=(probs[0], probs[1]), chosen=(chosen[0], chosen[1]), gate=(gates[0], gates[1]))


def classification_loss(tape: Tape, decision: RouteDecision, gold_bin: int, k: int) -> Tensor:
    """Average routing loss over the two sentences of a pair.

    Both sentences are supervised with the pair's single gold bin. For
    two bins this is binary cross-entropy on the top-bin probability;
    for more bins, categorical cross-entropy against the one-hot bin.
    """
    if not 0 <= gold_bin < k:
        raise ValueError(f"classification_loss: gold bin {gold_bin} outside scheme with {k} bins")
    terms = []
    for p in decision.probs:
        if k == 2:
            t = 1.0 if gold_bin == 0 else 0.0
            terms.append(ad.bce(tape, t, ad.index(tape, p, 0)))
        else:
            terms.append(ad.categorical_ce(tape, p, gold_bin))
    return ad.scale(tape, ad.add_n(tape, terms), 0.5)


def project(tape: Tape, params: HeadParams, config: HeadConfig, enc: EncodedPair, decision: RouteDecision) -> ProjectedPair:
    """Map each sentence vector into its range subspace.

    Hard selection applies only the chosen projector, scaled by the
    gate. Soft selection sums every projector's output weighted by its
    routing probability.
    """
    out = []
    for j, h in enumerate((enc.sent1, enc.sent2)):
        if config.selection is Selection.ARGMAX or params.k == 1:
            w, b = params.projectors[decision.chosen[j]]
            z = ad.scale_by(tape, ad.linear(tape, w, b, h), decision.gate[j])
        else:
            parts = []
            for c, (w, b) in enumerate(params.projectors):
                parts.append(ad.scale_by(tape, ad.linear(tape, w, b, h), ad.index(tape, decision.probs[j], c)))
            z = ad.add_n(tape, parts)
        out.append(z)
    return ProjectedPair(vec1=out[0], vec2=out[1], decision=decision)


def score(tape: Tape, params: HeadParams, projected: ProjectedPair) -> Tensor:
    """Similarity probability from the scorer over both projected vectors."""
    if params.scorer_w is None:
        raise ValueError("score: this head has no scorer (cosine objective)")
    logits = ad.linear(tape, params.scorer_w, params.scorer_b, ad.concat(tape, projected.vec1, projected.vec2))
    return ad.sigmoid(tape, ad.index(tape, logits, 0))


def prediction(tape: Tape, params: HeadParams, config: HeadConfig, projected: ProjectedPair) -> Tensor:
    """The model's similarity output: scorer probability, or raw cosine
    of the projected vectors under the cosine objective."""
    if config.objective is Objective.BCE:
        return score(tape, params, projected)
    return ad.cosine(tape, projected.vec1, projected.vec2)


def rank_loss(tape: Tape, config: HeadConfig, pred: Tensor, target: float) -> Tensor:
    """Supervised ranking loss against the normalized gold similarity."""
    if config.objective is Objective.BCE:
        return ad.bce(tape, target, pred)
    return ad.square(tape, ad.sub(tape, pred, ad.constant(np.asarray(float(target)))))


@dataclass
class SampleForward:
    encoded: EncodedPair
    decision: RouteDecision
    projected: ProjectedPair
    pred: Tensor


def forward_sample(tape: Tape, encoder, params: HeadParams, config: HeadConfig, pair: SentencePair) -> SampleForward:
    enc = encoder.encode(tape, pair)
    decision = route(tape, params, config, enc)
    projected = project(tape, params, config, enc, decision)
    pred = prediction(tape, params, config, projected)
    return SampleForward(encoded=enc, decision=decision, projected=projected, pred=pred)


def sample_loss(tape: Tape, encoder, params: HeadParams, config: HeadConfig, pair: SentencePair) -> Tensor:
    """Weighted per-sample objective: rank term plus optional routing term."""
    fw = forward_sample(tape, encoder, params, config, pair)
    total = ad.scale(tape, rank_loss(tape, config, fw.pred, pair.target), config.rank_loss_weight)
    if config.use_clf_loss:
        gold_bin = config.bins.bin_of(pair.gold_score)
        clf = classification_loss(tape, fw.decision, gold_bin, params.k)
        total = ad.add(tape, total, ad.scale(tape, clf, config.clf_loss_weight))
    return total


def batch_loss(tape: Tape, encoder, params: HeadParams, config: HeadConfig, pairs: list[SentencePair]) -> Tensor:
    """Arithmetic mean of per-sample losses over a non-empty batch."""
    if not pairs:
        raise ValueError("batch_loss: empty batch")
    losses = [sample_loss(tape, encoder, params, config, p) for p in pairs]
    return ad.scale(tape, ad.add_n(tape, losses), 1.0 / len(losses))


def variant_config(name: str, bins: BinScheme | None = None) -> HeadConfig:
    """Preset head configurations for the trained comparators."""
    bins = bins or BinScheme()
    if name == "mixsp":
        return HeadConfig(bins=bins)
    if name == "moe":
        return HeadConfig(bins=bins, selection=Selection.WEIGHTED_AVERAGE, use_clf_loss=False)
    if name == "ft":
        return HeadConfig(
            bins=bins,
            objective=Objective.COSINE_MSE,
            use_clf_loss=False,
            single_projector=True,
        )
    raise ValueError(f"unknown variant '{name}' (expected mixsp, ft, or moe)")
