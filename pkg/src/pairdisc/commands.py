"""Registered steps for every CLI command.

Steps of one command run in ``order`` and communicate through the command's
context. Results go to stdout, diagnostics to the log.
"""
import csv
import logging
from pathlib import Path
from typing import List

import numpy as np

from .config import load_train_config
from .contexts import CompareContext, GradcheckContext, ModelContext, SentimentContext, SplitContext, TrainContext
from .errors import CheckpointError, ConfigError, DataError
from .metrics import corpus_report, friedman_ranks, nemenyi_cd, nemenyi_compare
from .model import build_store, check_model_gradients, random_pairs
from .models import MetricReport, ModelDims, ProbeConfig, TrainConfig
from .registry import step
from .sentiment import (class_counts, embed_phrases, error_rate, load_probe, loss_and_grad, predict,
                        save_probe, train_logreg)
from .text import (SENTIMENT_LABELS, Vocabulary, apply_split, build_vocab, load_pairs, load_phrases, load_split,
                   make_splits, read_pair_rows, tokenize, write_split)
from .trainer import (evaluate, finish_manifest, generate, load_model, model_parts, train, verify_manifest,
                      write_manifest)

logger = logging.getLogger(__name__)

SPLIT_SUFFIX = ".idx"


def _read_lines(path: Path) -> List[str]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    return path.read_text(encoding="utf-8").splitlines()


def _print_report(report: MetricReport) -> None:
    print("\t".join(MetricReport.columns()))
    print("\t".join(report.as_row()))
    print(report.model_dump_json(indent=2))


# train

@step("train", order=10)
def load_config(context: TrainContext) -> None:
    args = context.args
    context.config = load_train_config(args.config)
    context.out_dir = Path(args.out)
    files = [Path(args.config), Path(args.data)]
    files += [Path(p) for p in (args.val, args.split) if p]
    context.data_files = files


@step("train", order=20)
def load_training_data(context: TrainContext) -> None:
    args, config = context.args, context.config
    split = load_split(args.split) if args.split else None
    if args.resume:
        _, meta = load_model(args.resume)
        vocab = Vocabulary(meta["vocab"])
    else:
        rows = read_pair_rows(args.data)
        if split is not None:
            rows = apply_split(rows, split)
        if not rows:
            raise DataError(f"{args.data}: no duplicate pairs to train on")
        corpus = [src for src, _ in rows] + [tgt for _, tgt in rows]
        vocab = build_vocab(corpus, min_count=config.min_count, max_size=config.max_vocab)
    t_max = config.dims.t_max
    context.vocab = vocab
    context.train_pairs = load_pairs(args.data, vocab, t_max, split)
    if not context.train_pairs:
        raise DataError(f"{args.data}: no duplicate pairs to train on")
    if args.val:
        context.val_pairs = load_pairs(args.val, vocab, t_max)
    logger.info("%d training pairs, %d validation pairs, vocabulary of %d",
                len(context.train_pairs), len(context.val_pairs), len(vocab))


@step("train", order=30)
def record_manifest(context: TrainContext) -> None:
    if context.args.resume:
        context.manifest = verify_manifest(context.out_dir, context.data_files)
    else:
        context.manifest = write_manifest(context.out_dir, context.config, context.data_files)


@step("train", order=40)
def run_training(context: TrainContext) -> None:
    result = train(context.config, context.train_pairs, context.vocab, context.out_dir,
                   val_pairs=context.val_pairs, resume=context.args.resume)
    context.checkpoints = result.checkpoints
    context.manifest = finish_manifest(context.out_dir, context.manifest)
    if result.checkpoints:
        print(result.checkpoints[-1])
    else:
        print(context.args.resume)


# generate

@step("generate", order=10)
def load_generation_model(context: ModelContext) -> None:
    context.store, context.vocab, context.config = model_parts(context.args.ckpt)


@step("generate", order=20)
def read_sources(context: ModelContext) -> None:
    context.sources = [tokenize(line) for line in _read_lines(context.args.input)]


@step("generate", order=30)
def write_generations(context: ModelContext) -> None:
    context.hypotheses = generate(context.store, context.vocab, context.sources, context.config.dims.t_max)
    out = Path(context.args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(" ".join(h) + "\n" for h in context.hypotheses), encoding="utf-8")
    logger.info("wrote %d generations to %s", len(context.hypotheses), out)


# eval

@step("eval", order=10)
def load_eval_inputs(context: ModelContext) -> None:
    args = context.args
    if args.hyp or args.ref:
        if not (args.hyp and args.ref):
            raise ConfigError("eval needs both --hyp and --ref")
        hyps, refs = _read_lines(args.hyp), _read_lines(args.ref)
        if len(hyps) != len(refs):
            raise DataError(f"{args.hyp} has {len(hyps)} lines but {args.ref} has {len(refs)}")
        context.hypotheses = [tokenize(h) for h in hyps]
        context.rows = [([], tokenize(r)) for r in refs]
        return
    if not (args.ckpt and args.test):
        raise ConfigError("eval needs --ckpt and --test, or --hyp and --ref")
    context.store, context.vocab, context.config = model_parts(args.ckpt)
    context.rows = read_pair_rows(args.test)


@step("eval", order=20)
def score_hypotheses(context: ModelContext) -> None:
    args = context.args
    if context.store is None:
        refs = [ref for _, ref in context.rows]
        context.report = corpus_report(context.hypotheses, refs, smoothing=args.smoothing)
        return
    context.report, context.hypotheses = evaluate(context.store, context.vocab, context.rows,
                                                  context.config.dims.t_max, smoothing=args.smoothing)
    if args.out:
        Path(args.out).write_text("".join(" ".join(h) + "\n" for h in context.hypotheses), encoding="utf-8")


@step("eval", order=30)
def print_report(context: ModelContext) -> None:
    _print_report(context.report)


# sentiment

@step("sentiment-train", order=10)
def load_frozen_encoder(context: SentimentContext) -> None:
    context.store, context.vocab, config = model_parts(context.args.ckpt)
    context.encoder_checksum = context.store.checksum("enc.")
    overrides = {k: getattr(context.args, k) for k in ("epochs", "seed") if getattr(context.args, k) is not None}
    context.probe_config = ProbeConfig(**overrides)
    context.summary["t_max"] = config.dims.t_max


@step("sentiment-eval", order=10)
def load_probe_and_encoder(context: SentimentContext) -> None:
    context.params, meta = load_probe(context.args.probe)
    ckpt = context.args.ckpt or meta["encoder_checkpoint"]
    context.store, context.vocab, config = model_parts(ckpt)
    context.encoder_checksum = context.store.checksum("enc.")
    if context.encoder_checksum != meta["encoder_checksum"]:
        raise CheckpointError(f"{ckpt}: encoder differs from the one the probe was trained on")
    context.summary["t_max"] = config.dims.t_max


@step("sentiment-train", order=20)
@step("sentiment-eval", order=20)
def load_labeled_phrases(context: SentimentContext) -> None:
    context.phrases = load_phrases(context.args.data, context.vocab, context.summary["t_max"])
    if not context.phrases:
        raise DataError(f"{context.args.data}: no labeled phrases")
    val = getattr(context.args, "val", None)
    if val:
        context.val_phrases = load_phrases(val, context.vocab, context.summary["t_max"])
        if not context.val_phrases:
            raise DataError(f"{val}: no labeled phrases")


@step("sentiment-train", order=30)
def fit_probe(context: SentimentContext) -> None:
    embeddings = embed_phrases(context.store, context.phrases)
    labels = [p.label for p in context.phrases]
    validation = None
    if context.val_phrases:
        validation = (embed_phrases(context.store, context.val_phrases), [p.label for p in context.val_phrases])
    context.params = train_logreg(embeddings, labels, context.probe_config, validation)
    if context.store.checksum("enc.") != context.encoder_checksum:
        raise CheckpointError("encoder parameters changed during probe training")
    save_probe(context.args.out, context.params, context.args.ckpt, context.encoder_checksum)
    predicted, _ = predict(context.params, embeddings)
    context.summary["error_rate"] = error_rate(predicted, labels)
    context.summary["counts"] = class_counts(predicted, labels)
    if validation is not None:
        val_loss, _, _ = loss_and_grad(context.params, *validation)
        context.summary["val_loss"] = val_loss
        val_predicted, _ = predict(context.params, validation[0])
        context.summary["val_error_rate"] = error_rate(val_predicted, validation[1])


@step("sentiment-eval", order=30)
def score_probe(context: SentimentContext) -> None:
    embeddings = embed_phrases(context.store, context.phrases)
    labels = [p.label for p in context.phrases]
    predicted, _ = predict(context.params, embeddings)
    context.summary["error_rate"] = error_rate(predicted, labels)
    context.summary["counts"] = class_counts(predicted, labels)


@step("sentiment-train", order=40)
@step("sentiment-eval", order=40)
def print_probe_summary(context: SentimentContext) -> None:
    print(f"error_rate\t{context.summary['error_rate']:.6f}")
    for row in context.summary["counts"]:
        print(f"{SENTIMENT_LABELS[row['label']]}\t{row['correct']}/{row['total']}")
    for key in ("val_loss", "val_error_rate"):
        if key in context.summary:
            print(f"{key}\t{context.summary[key]:.6f}")


# gradcheck

@step("gradcheck", order=10)
def run_gradcheck(context: GradcheckContext) -> None:
    args = context.args
    dims = ModelDims(vocab_size=args.vocab, embed_dim=args.embed, hidden_dim=args.hidden, t_max=args.max_len)
    cfg = TrainConfig(variant=args.variant, batch_size=args.batch, seed=args.seed, dims=dims)
    store = build_store(dims, args.seed, shared=cfg.shared)
    batch = random_pairs(args.batch, args.vocab, args.max_len, args.seed)
    context.report = check_model_gradients(store, batch, cfg, samples=args.samples, seed=args.seed, h=args.h)


@step("gradcheck", order=20)
def print_gradcheck(context: GradcheckContext) -> None:
    report, tolerance = context.report, context.args.tolerance
    print(f"max relative error {report.max_rel_error:.3e} over {report.checked} coordinates "
          f"({report.excluded} excluded near hinge kinks)")
    if report.worst:
        print(f"worst coordinate {report.worst}")
    passed = report.passed(tolerance)
    print(f"{'PASS' if passed else 'FAIL'} at tolerance {tolerance:g}")
    context.exit_code = 0 if passed else 3


# compare

@step("compare", order=10)
def read_scores(context: CompareContext) -> None:
    path = Path(context.args.scores)
    if not path.is_file():
        raise DataError(f"scores file not found: {path}")
    with path.open("r", encoding="utf-8", newline="") as handle:
        rows = [r for r in csv.reader(handle, delimiter="\t") if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise DataError(f"{path}: need a header of method names and at least one row of scores")
    context.methods = [m.strip() for m in rows[0]]
    scores = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(context.methods):
            raise DataError(f"{path}:{lineno}: expected {len(context.methods)} scores, got {len(row)}")
        try:
            scores.append([float(c) for c in row])
        except ValueError:
            raise DataError(f"{path}:{lineno}: scores must be numbers") from None
    context.scores = scores


@step("compare", order=20)
def print_ranking(context: CompareContext) -> None:
    scores = np.asarray(context.scores)
    avg, p_value = friedman_ranks(scores, higher_is_better=not context.args.lower_is_better)
    cd = nemenyi_cd(len(context.methods), scores.shape[0], context.args.alpha)
    print("method\tavg_rank")
    for name, rank in sorted(zip(context.methods, avg), key=lambda item: item[1]):
        print(f"{name}\t{rank:.4f}")
    print(f"critical_difference\t{cd:.4f}")
    print(f"friedman_p\t{p_value:.4g}")
    for verdict in nemenyi_compare(context.methods, list(avg), cd):
        a, b = verdict["pair"]
        flag = "significant" if verdict["significant"] else "not significant"
        print(f"{a} vs {b}\t{verdict['rank_diff']:.4f}\t{flag}")


# split

def _csv_list(value: str) -> List[str]:
    return [part.strip() for part in value.split(",") if part.strip()]


@step("split", order=10)
def plan_splits(context: SplitContext) -> None:
    args = context.args
    try:
        context.sizes = [int(s) for s in _csv_list(args.sizes)]
    except ValueError:
        raise ConfigError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from None
    if not context.sizes or any(s < 1 for s in context.sizes):
        raise ConfigError("--sizes needs at least one positive size")
    context.names = _csv_list(args.names) if args.names else [f"split{k}" for k in range(len(context.sizes))]
    if len(context.names) != len(context.sizes):
        raise ConfigError(f"{len(context.names)} names for {len(context.sizes)} sizes")
    if len(set(context.names)) != len(context.names):
        raise ConfigError("split names must be unique")
    context.row_count = len(read_pair_rows(args.data))


@step("split", order=20)
def write_split_files(context: SplitContext) -> None:
    out_dir = Path(context.args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = make_splits(context.row_count, context.sizes, context.args.seed)
    for name, indices in zip(context.names, splits):
        path = out_dir / f"{name}{SPLIT_SUFFIX}"
        write_split(path, indices)
        context.paths.append(path)
        print(f"{path}\t{len(indices)}")
    logger.info("split %d duplicate pairs with seed %d", context.row_count, context.args.seed)
