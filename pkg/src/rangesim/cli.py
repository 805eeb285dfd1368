"""Command-line entry point.

Subcommands: synth, train, eval, analyze, leakage. Every emitted report
embeds the fully resolved run configuration; figures are rendered next
to the delimited outputs they describe.

Exit codes: 0 success, 2 usage, 3 I/O, 4 runtime/numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .analysis import DiagnosticError, alignment, cosine_samples, kde_overlap, ngram_jaccard, uniformity, write_density_csv
from .data import BinScheme, load_tsv, load_vocab, save_tsv, save_vocab, split, synth_corpus, write_meta
from .evaluation import build_eval_report
from .head import HeadConfig, Objective, RouterInput, Selection, variant_config
from .metrics import load_rerank_jsonl
from .model import build_model
from .optim import NonFiniteGradientError
from .plotting import save_density_figure, save_history_figure
from .training import (
    CheckpointError,
    SelectionMetric,
    TrainConfig,
    TrainingDivergedError,
    TrainMode,
    load_checkpoint,
    save_checkpoint,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_RUNTIME = 4

ROUTER_INPUT_NAMES = {"cls+ctx": RouterInput.CLS_PLUS_CTX, "ctx": RouterInput.CTX_ONLY, "pair": RouterInput.PAIR_CTX}
SELECTION_NAMES = {"argmax": Selection.ARGMAX, "weighted": Selection.WEIGHTED_AVERAGE}
OBJECTIVE_NAMES = {"bce": Objective.BCE, "cosine": Objective.COSINE_MSE}


class UsageError(ValueError):
    pass


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_json(obj: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        obj = json.load(f)
    if not isinstance(obj, dict):
        raise UsageError(f"{path}: config file must contain a JSON object")
    return obj


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x != ""]
    except ValueError:
        raise UsageError(f"{flag}: expected a comma-separated list of integers, got '{text}'") from None


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x != ""]
    except ValueError:
        raise UsageError(f"{flag}: expected a comma-separated list of numbers, got '{text}'") from None


def _resolve_head_config(args, file_cfg: dict) -> HeadConfig:
    """Precedence: individual flags > --variant preset > config file > defaults."""
    base = HeadConfig().to_dict()
    base.update(file_cfg.get("head", {}))
    variant = getattr(args, "variant", None)
    if variant:
        base.update(variant_config(variant).to_dict())
    if getattr(args, "bins", None):
        base["bins"] = _parse_float_list(args.bins, "--bins")
    if getattr(args, "router_input", None):
        base["router_input"] = ROUTER_INPUT_NAMES[args.router_input].value
    if getattr(args, "selection", None):
        base["selection"] = SELECTION_NAMES[args.selection].value
    if getattr(args, "objective", None):
        base["objective"] = OBJECTIVE_NAMES[args.objective].value
    if getattr(args, "alpha1", None) is not None:
        base["rank_loss_weight"] = args.alpha1
    if getattr(args, "alpha2", None) is not None:
        base["clf_loss_weight"] = args.alpha2
    if getattr(args, "no_clf_loss", False):
        base["use_clf_loss"] = False
    try:
        return HeadConfig.from_dict(base)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _resolve_train_config(args, file_cfg: dict, seed: int) -> TrainConfig:
    base = TrainConfig().to_dict()
    base.update(file_cfg.get("train", {}))
    if getattr(args, "lr", None) is not None:
        base["learning_rate"] = args.lr
    if getattr(args, "batch", None) is not None:
        base["batch_size"] = args.batch
    if getattr(args, "epochs", None) is not None:
        base["epochs"] = args.epochs
    if getattr(args, "mode", None):
        base["mode"] = TrainMode.END_TO_END.value if args.mode == "endtoend" else TrainMode.TWO_STAGE.value
    if getattr(args, "selection_metric", None):
        base["selection_metric"] = (
            SelectionMetric.DEV_SPEARMAN.value if args.selection_metric == "spearman" else SelectionMetric.DEV_LOSS.value
        )
    base["seed"] = seed
    try:
        return TrainConfig.from_dict(base)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _load_corpus_with_vocab(data_path, vocab_arg, checkpoint_vocab):
    """Map eval/analyze data through the checkpoint vocabulary when present."""
    vocab = None
    if vocab_arg:
        vocab = load_vocab(vocab_arg)
    elif checkpoint_vocab is not None:
        vocab = list(checkpoint_vocab)
    else:
        sibling = Path(data_path).parent / "vocab.txt"
        if sibling.exists():
            vocab = load_vocab(sibling)
    return load_tsv(data_path, vocab=vocab)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    fractions = tuple(_parse_float_list(args.fractions, "--fractions"))
    try:
        corpus, _latents = synth_corpus(args.pairs, args.dim, args.vocab, args.seed, noise=args.noise)
        parts = split(corpus, fractions, args.seed)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if any(len(part.pairs) == 0 for part in parts):
        raise UsageError(f"split impossible: {args.pairs} pairs cannot fill fractions {fractions}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = ("train", "dev", "test")
    for i, part in enumerate(parts):
        name = names[i] if i < len(names) else f"part{i}"
        save_tsv(part, out / f"{name}.tsv")
    save_vocab(corpus.vocab, out / "vocab.txt")
    write_meta(corpus.meta, out / "meta.txt")
    print(f"wrote {len(parts)} split(s) to {out} ({'/'.join(str(len(p.pairs)) for p in parts)} pairs)")
    return EXIT_OK


def cmd_train(args) -> int:
    file_cfg = _load_config_file(args.config)
    head_cfg = _resolve_head_config(args, file_cfg)
    seeds = _parse_int_list(args.seeds, "--seeds")
    if not seeds:
        raise UsageError("--seeds: need at least one seed")
    dim = args.dim if args.dim is not None else int(file_cfg.get("dim", 16))

    data_dir = Path(args.data)
    vocab = load_vocab(data_dir / "vocab.txt")
    scheme = head_cfg.bins
    train_corpus = load_tsv(data_dir / "train.tsv", vocab=vocab, scheme=scheme)
    dev_corpus = load_tsv(data_dir / "dev.tsv", vocab=vocab, scheme=scheme)
    test_corpus = load_tsv(data_dir / "test.tsv", vocab=vocab, scheme=scheme)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    per_seed = []
    resolved = {
        "command": "train",
        "data": str(data_dir),
        "out": str(out),
        "dim": dim,
        "variant": args.variant,
        "seeds": seeds,
        "head": head_cfg.to_dict(),
    }
    for seed in seeds:
        train_cfg = _resolve_train_config(args, file_cfg, seed)
        resolved["train"] = train_cfg.to_dict()
        model = build_model(dim, head_cfg, seed, vocab_size=len(vocab), encoder_kind="toy")
        result = train(model, train_corpus, dev_corpus, train_cfg)
        report = build_eval_report(result.model, test_corpus)
        ckpt_path = out / f"model_seed{seed}.json"
        save_checkpoint(result.model, ckpt_path, train_config=train_cfg, history=result.history, vocab=vocab)
        save_history_figure(result.history, out / f"history_seed{seed}.png")
        per_seed.append(
            {
                "seed": seed,
                "checkpoint": str(ckpt_path),
                "best_epoch": result.best_epoch,
                "best_dev_metric": result.best_metric,
                "test": report.to_dict(),
            }
        )
        print(f"seed {seed}: best dev metric {result.best_metric} (epoch {result.best_epoch}), "
              f"test spearman {report.spearman_overall}")

    test_spearmans = [s["test"]["spearman_overall"] for s in per_seed if s["test"]["spearman_overall"] is not None]
    aggregate = {
        "config": resolved,
        "timestamp": _timestamp(),
        "per_seed": per_seed,
        "mean_test_spearman": float(np.mean(test_spearmans)) if test_spearmans else None,
        "std_test_spearman": float(np.std(test_spearmans, ddof=1)) if len(test_spearmans) > 1 else None,
    }
    _write_json(aggregate, out / "report.json")
    if aggregate["mean_test_spearman"] is not None:
        std = aggregate["std_test_spearman"]
        print(f"test spearman over {len(seeds)} seed(s): {aggregate['mean_test_spearman']:.4f}"
              + (f" +/- {std:.4f}" if std is not None else ""))
    return EXIT_OK


def cmd_eval(args) -> int:
    model, meta = load_checkpoint(args.model)
    corpus = _load_corpus_with_vocab(args.data, args.vocab, meta["encoder"].get("vocab"))
    rerank = load_rerank_jsonl(args.rerank) if args.rerank else None
    report = build_eval_report(model, corpus, rerank_queries=rerank)
    obj = {
        "config": {
            "command": "eval",
            "model": str(args.model),
            "data": str(args.data),
            "rerank": str(args.rerank) if args.rerank else None,
            "head": model.config.to_dict(),
        },
        "timestamp": _timestamp(),
        "report": report.to_dict(),
    }
    _write_json(obj, args.report)
    print(f"spearman {report.spearman_overall}  router_acc {report.router_accuracy}  auc {report.auc}")
    if report.notes:
        for note in report.notes:
            print(f"note: {note}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    model, meta = load_checkpoint(args.model)
    corpus = _load_corpus_with_vocab(args.data, args.vocab, meta["encoder"].get("vocab"))
    samples, skipped = cosine_samples(model, corpus, space=args.space)
    upper = [s.cosine for s in samples if s.is_upper]
    lower = [s.cosine for s in samples if not s.is_upper]
    overlap, grid = kde_overlap(upper, lower)

    positives = [(pv[0], pv[1]) for pv, is_up in (
        (model.pair_vectors(p, space=args.space), p.gold_score >= 4.0) for p in corpus.pairs
    ) if is_up]
    vectors = []
    for p in corpus.pairs:
        v1, v2 = model.pair_vectors(p, space=args.space)
        vectors.extend([v1, v2])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "config": {
            "command": "analyze",
            "model": str(args.model),
            "data": str(args.data),
            "space": args.space,
            "head": model.config.to_dict(),
        },
        "timestamp": _timestamp(),
        "overlap": overlap,
        "overlap_percent": 100.0 * overlap,
        "bandwidth_upper": grid.bandwidth_upper,
        "bandwidth_lower": grid.bandwidth_lower,
        "alignment": alignment(positives),
        "uniformity": uniformity(vectors),
        "n_pairs": len(corpus.pairs),
        "skipped_pairs": skipped,
    }
    _write_json(report, out / "report.json")
    write_density_csv(grid, out / "density.csv")
    save_density_figure(grid, overlap, out / "density.png")
    print(f"overlap {overlap:.6f} ({100.0 * overlap:.2f}%)  alignment {report['alignment']:.6f}  "
          f"uniformity {report['uniformity']:.6f}")
    return EXIT_OK


def cmd_leakage(args) -> int:
    ns = _parse_int_list(args.ngrams, "--ngrams")
    if not ns or any(n < 1 for n in ns):
        raise UsageError(f"--ngrams: need positive n-gram orders, got '{args.ngrams}'")

    def sentences_of(path) -> list[str]:
        corpus = load_tsv(path)
        out = []
        for p in corpus.pairs:
            out.append(" ".join(corpus.vocab[i] for i in p.sent1))
            out.append(" ".join(corpus.vocab[i] for i in p.sent2))
        return out

    sents_train = sentences_of(args.train)
    sents_test = sentences_of(args.test)
    values = {}
    for n in ns:
        values[str(n)] = ngram_jaccard(sents_train, sents_test, n)
        print(f"n={n} jaccard={values[str(n)]:.6f}")
    if args.json:
        _write_json(
            {
                "config": {"command": "leakage", "train": str(args.train), "test": str(args.test), "ngrams": ns},
                "timestamp": _timestamp(),
                "ngram_jaccard": values,
            },
            args.json,
        )
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rangesim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic similarity corpus")
    p.add_argument("--pairs", type=int, default=2000)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--vocab", type=int, default=128)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--noise", type=float, default=0.15)
    p.add_argument("--fractions", default="0.8,0.1,0.1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one or more models")
    p.add_argument("--data", required=True, help="directory with train/dev/test.tsv and vocab.txt")
    p.add_argument("--config", default=None, help="JSON config file (flags override it)")
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--variant", choices=("mixsp", "ft", "moe"), default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--mode", choices=("endtoend", "twostage"), default=None)
    p.add_argument("--selection-metric", dest="selection_metric", choices=("spearman", "loss"), default=None)
    p.add_argument("--bins", default=None, help="comma-separated bin edges, e.g. 0,4,5")
    p.add_argument("--router-input", dest="router_input", choices=tuple(ROUTER_INPUT_NAMES), default=None)
    p.add_argument("--selection", choices=tuple(SELECTION_NAMES), default=None)
    p.add_argument("--objective", choices=tuple(OBJECTIVE_NAMES), default=None)
    p.add_argument("--alpha1", type=float, default=None, help="rank loss weight")
    p.add_argument("--alpha2", type=float, default=None, help="classification loss weight")
    p.add_argument("--no-clf-loss", dest="no_clf_loss", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a TSV corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--rerank", default=None, help="JSONL reranking queries for MAP")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="embedding-space diagnostics for a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--space", choices=("projected", "encoder"), default="projected")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("leakage", help="word n-gram Jaccard overlap between two corpora")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--ngrams", default="4,5,6")
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_leakage)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, PermissionError, IsADirectoryError) as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    except CheckpointError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    except (TrainingDivergedError, NonFiniteGradientError, DiagnosticError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
