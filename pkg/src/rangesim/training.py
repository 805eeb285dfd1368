"""Training loops, deterministic batching, model selection, checkpoints.

Two modes: the joint end-to-end loop backpropagates the full weighted
objective every step; the two-stage comparator first trains router and
encoder on the routing loss alone, then freezes the router and trains
projectors and scorer on the weighted rank loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .autodiff import Tape, Tensor
from .data import Corpus, SentencePair
from .encoders import FrozenEncoder, ToyEncoder
from .head import HeadConfig, HeadParams, Objective, classification_loss, forward_sample
from .metrics import DegenerateInputError, spearman
from .model import SimilarityModel, build_model
from .optim import AdamW
from . import autodiff as ad

CHECKPOINT_VERSION = 1


class TrainMode(str, Enum):
    END_TO_END = "end_to_end"
    TWO_STAGE = "two_stage"


class SelectionMetric(str, Enum):
    DEV_SPEARMAN = "dev_spearman"
    DEV_LOSS = "dev_loss"


class TrainingDivergedError(RuntimeError):
    """The batch loss became non-finite."""


class CheckpointError(ValueError):
    """A checkpoint file is unreadable or inconsistent with its own metadata."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    batch_size: int = 16
    epochs: int = 10
    seed: int = 0
    mode: TrainMode = TrainMode.END_TO_END
    selection_metric: SelectionMetric = SelectionMetric.DEV_SPEARMAN

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"TrainConfig: learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"TrainConfig: batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"TrainConfig: epochs must be >= 0, got {self.epochs}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "mode": self.mode.value,
            "selection_metric": self.selection_metric.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(
            learning_rate=float(d["learning_rate"]),
            batch_size=int(d["batch_size"]),
            epochs=int(d["epochs"]),
            seed=int(d["seed"]),
            mode=TrainMode(d["mode"]),
            selection_metric=SelectionMetric(d["selection_metric"]),
        )


@dataclass
class TrainResult:
    model: SimilarityModel
    history: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    best_metric: float | None = None


def shuffle_batches(pairs: list[SentencePair], epoch: int, seed: int, batch_size: int) -> list[list[SentencePair]]:
    """Deterministic epoch-salted permutation sliced into batches.

    The last batch may be short. The permutation depends only on
    (seed, epoch).
    """
    perm = np.random.default_rng([seed, epoch]).permutation(len(pairs))
    shuffled = [pairs[i] for i in perm]
    return [shuffled[i : i + batch_size] for i in range(0, len(shuffled), batch_size)]


def dev_spearman(model: SimilarityModel, corpus: Corpus) -> float | None:
    """Spearman of predictions vs gold on a corpus; None when undefined."""
    preds = [model.predict(p) for p in corpus.pairs]
    golds = [p.gold_score for p in corpus.pairs]
    try:
        return spearman(preds, golds)
    except DegenerateInputError:
        return None


def _mean_loss(model: SimilarityModel, pairs: list[SentencePair], loss_fn) -> float:
    total = 0.0
    for p in pairs:
        total += float(loss_fn(Tape(), p).values)
    return total / len(pairs)


def _snapshot(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {name: t.values.copy() for name, t in params.items()}


def _restore(params: dict[str, Tensor], snap: dict[str, np.ndarray]) -> None:
    for name, t in params.items():
        t.values[...] = snap[name]


def _stage_params(model: SimilarityModel, stage: str) -> dict[str, Tensor]:
    """Parameters trained in a given two-stage phase."""
    head = model.head.named_params()
    if stage == "classifier":
        out = dict(model.encoder.trainable_params())
        out.update({k: v for k, v in head.items() if k.startswith("router.")})
        return out
    if stage == "ranker":
        return {k: v for k, v in head.items() if not k.startswith("router.")}
    raise ValueError(f"unknown stage '{stage}'")


def _clf_only_loss(model: SimilarityModel, tape: Tape, pair: SentencePair) -> Tensor:
    fw = forward_sample(tape, model.encoder, model.head, model.config, pair)
    gold_bin = model.config.bins.bin_of(pair.gold_score)
    return classification_loss(tape, fw.decision, gold_bin, model.head.k)


def _rank_only_loss(model: SimilarityModel, tape: Tape, pair: SentencePair) -> Tensor:
    from .head import rank_loss

    fw = forward_sample(tape, model.encoder, model.head, model.config, pair)
    return ad.scale(tape, rank_loss(tape, model.config, fw.pred, pair.target), model.config.rank_loss_weight)


def _run_stage(
    model: SimilarityModel,
    train_pairs: list[SentencePair],
    dev: Corpus,
    cfg: TrainConfig,
    params: dict[str, Tensor],
    loss_fn,
    epochs: int,
    epoch_offset: int,
    stage: str,
    select: bool,
    history: list[dict],
    best: dict,
) -> None:
    opt = AdamW(list(params.values()), lr=cfg.learning_rate)
    param_list = list(params.values())
    for e in range(epochs):
        epoch = epoch_offset + e
        epoch_losses = []
        for batch in shuffle_batches(train_pairs, epoch, cfg.seed, cfg.batch_size):
            tape = Tape()
            losses = [loss_fn(model, tape, p) for p in batch]
            total = ad.scale(tape, ad.add_n(tape, losses), 1.0 / len(losses))
            value = float(total.values)
            if not np.isfinite(value):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            tape.backward(total, leaves=param_list)
            opt.step()
            epoch_losses.append(value)
        entry = {
            "epoch": epoch,
            "stage": stage,
            "train_loss": float(np.mean(epoch_losses)),
            "dev_spearman": None,
            "dev_loss": None,
        }
        if len(dev.pairs) >= 2:
            entry["dev_spearman"] = dev_spearman(model, dev)
            entry["dev_loss"] = _mean_loss(model, dev.pairs, lambda t, p: loss_fn(model, t, p))
        history.append(entry)
        if select:
            metric = entry["dev_spearman"] if cfg.selection_metric is SelectionMetric.DEV_SPEARMAN else entry["dev_loss"]
            if metric is not None:
                better = best["metric"] is None or (
                    metric > best["metric"]
                    if cfg.selection_metric is SelectionMetric.DEV_SPEARMAN
                    else metric < best["metric"]
                )
                if better:
                    best["metric"] = metric
                    best["epoch"] = epoch
                    best["snapshot"] = _snapshot(model.named_params())


def train(model: SimilarityModel, train_corpus: Corpus, dev_corpus: Corpus, cfg: TrainConfig) -> TrainResult:
    """Train in place and return the model restored to its best dev epoch.

    Deterministic: (seed, config, corpus) fully determine the history
    and every parameter. With zero epochs the model is returned at its
    initialization.
    """
    if not train_corpus.pairs:
        raise ValueError("train: empty training split")
    if model.config.use_clf_loss:
        bins = {model.config.bins.bin_of(p.gold_score) for p in train_corpus.pairs}
        if len(bins) < 2:
            raise ValueError("train: classification loss enabled but the training split has a single class")

    history: list[dict] = []
    best: dict = {"metric": None, "epoch": None, "snapshot": None}

    if cfg.mode is TrainMode.END_TO_END:
        params = model.trainable_params()
        _run_stage(
            model,
            train_corpus.pairs,
            dev_corpus,
            cfg,
            params,
            lambda m, t, p: m.loss(t, p),
            cfg.epochs,
            0,
            "joint",
            select=True,
            history=history,
            best=best,
        )
    else:
        if model.head.k < 2:
            raise ValueError("train: the two-stage mode needs a routed head (k >= 2)")
        _run_stage(
            model,
            train_corpus.pairs,
            dev_corpus,
            cfg,
            _stage_params(model, "classifier"),
            _clf_only_loss,
            cfg.epochs,
            0,
            "classifier",
            select=False,
            history=history,
            best=best,
        )
        _run_stage(
            model,
            train_corpus.pairs,
            dev_corpus,
            cfg,
            _stage_params(model, "ranker"),
            _rank_only_loss,
            cfg.epochs,
            cfg.epochs,
            "ranker",
            select=True,
            history=history,
            best=best,
        )

    if best["snapshot"] is not None:
        _restore(model.named_params(), best["snapshot"])
    return TrainResult(model=model, history=history, best_epoch=best["epoch"], best_metric=best["metric"])


# ---------------------------------------------------------------------------
# Checkpoints: a single JSON object; floats are serialized as Python's
# shortest-round-trip decimals, so a save/load round trip is lossless.
# ---------------------------------------------------------------------------


def _encoder_descriptor(model: SimilarityModel, vocab: list[str] | None) -> dict:
    enc = model.encoder
    if isinstance(enc, ToyEncoder):
        desc = {"kind": "toy", "dim": enc.dim, "vocab_size": enc.vocab_size, "trainable": enc.trainable}
        if vocab is not None:
            if len(vocab) != enc.vocab_size:
                raise CheckpointError(
                    f"vocabulary has {len(vocab)} tokens but the encoder expects {enc.vocab_size}"
                )
            desc["vocab"] = list(vocab)
        return desc
    if isinstance(enc, FrozenEncoder):
        if enc.store_path is None:
            raise CheckpointError("cannot checkpoint a frozen encoder without a store path")
        return {"kind": "frozen", "dim": enc.dim, "store_path": enc.store_path}
    raise CheckpointError(f"encoder kind '{enc.kind}' is not checkpointable")


def save_checkpoint(
    model: SimilarityModel,
    path,
    train_config: TrainConfig | None = None,
    history: list[dict] | None = None,
    vocab: list[str] | None = None,
) -> None:
    obj = {
        "format": "rangesim-checkpoint",
        "version": CHECKPOINT_VERSION,
        "float_format": "shortest-roundtrip-decimal",
        "dim": model.dim,
        "encoder": _encoder_descriptor(model, vocab),
        "head_config": model.config.to_dict(),
        "train_config": train_config.to_dict() if train_config else None,
        "history": history or [],
        "param_count": model.param_count(),
        "params": {
            name: {"shape": list(t.values.shape), "values": [float(v) for v in t.values.reshape(-1)]}
            for name, t in model.named_params().items()
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f)


def load_checkpoint(path) -> tuple[SimilarityModel, dict]:
    """Rebuild a model from a checkpoint; returns (model, raw metadata)."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            obj = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: not valid JSON: {e}") from None
    if obj.get("format") != "rangesim-checkpoint":
        raise CheckpointError(f"{path}: not a checkpoint file")
    if obj.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {obj.get('version')!r}")
    try:
        dim = int(obj["dim"])
        enc_desc = obj["encoder"]
        config = HeadConfig.from_dict(obj["head_config"])
        raw_params = obj["params"]
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: malformed checkpoint: {e}") from None

    if enc_desc["kind"] == "toy":
        model = build_model(
            dim,
            config,
            seed=0,
            vocab_size=int(enc_desc["vocab_size"]),
            encoder_kind="toy",
            trainable_encoder=bool(enc_desc["trainable"]),
        )
    elif enc_desc["kind"] == "frozen":
        store = FrozenEncoder.load(enc_desc["store_path"], expected_dim=dim)
        model = build_model(dim, config, seed=0, encoder_kind="frozen", frozen_store=store)
    else:
        raise CheckpointError(f"{path}: unknown encoder kind '{enc_desc['kind']}'")

    live = model.named_params()
    if set(live) != set(raw_params):
        missing = set(live) ^ set(raw_params)
        raise CheckpointError(f"{path}: parameter set mismatch: {sorted(missing)}")
    for name, t in live.items():
        entry = raw_params[name]
        shape = tuple(int(s) for s in entry["shape"])
        values = np.asarray(entry["values"], dtype=np.float64)
        if shape != t.values.shape:
            raise CheckpointError(
                f"{path}: parameter '{name}' has shape {list(shape)}, expected {list(t.values.shape)}"
            )
        if values.size != t.values.size:
            raise CheckpointError(
                f"{path}: parameter '{name}' has {values.size} values for shape {list(shape)}"
            )
        t.values[...] = values.reshape(shape)
    return model, obj
