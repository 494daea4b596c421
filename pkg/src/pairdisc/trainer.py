"""Joint training loop, checkpoint series, generation and evaluation."""
import hashlib
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .decoder import generate_greedy
from .encoder import encode
from .errors import CheckpointError, DataError, DivergenceError, NonFiniteError
from .metrics import corpus_report
from .model import build_store, forward_backward, phase_for_step
from .models import BatchLossReport, MetricReport, RmsPropConfig, RunManifest, TrainConfig
from .optim import epoch_decay, rmsprop_step
from .params import ParameterStore
from .text import ParaphrasePair, Vocabulary, batches

logger = logging.getLogger(__name__)

MODEL_KIND = "pairdisc-model"
METRICS_COLUMNS = ("epoch", "lr", "train_local", "train_global", "train_total", "val_total", "val_local")
MANIFEST_NAME = "manifest.json"
OOV_WARNING_RATE = 0.5
METRICS_NAME = "metrics.tsv"


def checkpoint_name(epoch: int) -> str:
    return f"ckpt-{epoch:04d}.bin"


def train_step(store: ParameterStore, batch: Sequence[ParaphrasePair], config: TrainConfig,
               rmsprop: RmsPropConfig, step: int = 0,
               last_checkpoint: Optional[str] = None) -> BatchLossReport:
    """One forward/backward pass over ``batch`` followed by a single RMSProp update."""
    phase = phase_for_step(config, step)
    store.zero_grad()
    try:
        outcome = forward_backward(store, batch, config, backward=True, phase=phase)
    except NonFiniteError as e:
        raise DivergenceError(f"step {step}: {e}", last_checkpoint) from e
    if not np.isfinite(outcome.total):
        raise DivergenceError(f"step {step}: non-finite loss {outcome.total}", last_checkpoint)

    norm = store.grad_norm()
    clipped = False
    if config.clip_norm is not None and norm > config.clip_norm:
        store.scale_grads(config.clip_norm / norm)
        clipped = True
        logger.debug("step %d: gradient norm %.4g clipped to %.4g", step, norm, config.clip_norm)
    try:
        rmsprop_step(store, rmsprop)
    except NonFiniteError as e:
        raise DivergenceError(f"step {step}: {e}", last_checkpoint) from e

    return BatchLossReport(
        local=outcome.local,
        global_=outcome.global_,
        total=outcome.total,
        grad_norm=norm,
        clipped=clipped,
        active_margins=outcome.active,
        log_floor_hits=outcome.floor_hits,
    )


def _validation_batches(pairs: Sequence[ParaphrasePair], batch_size: int, uses_global: bool) -> List[list]:
    out = [list(pairs[i:i + batch_size]) for i in range(0, len(pairs), batch_size)]
    if uses_global and out and len(out[-1]) < 2:
        out.pop()
    return out


class ValidationLoss(NamedTuple):
    local: float
    total: float


def validation_loss(store: ParameterStore, pairs: Sequence[ParaphrasePair], config: TrainConfig) -> ValidationLoss:
    """Mean local and total loss over file-order batches.

    Args:
        store: Model parameters; gradients are not touched.
        pairs: Validation pairs, batched in file order.
        config: Supplies the batch size and the loss weights.

    Returns:
        ``ValidationLoss`` of batch means, both NaN when no batch can be formed.
    """
    chunks = _validation_batches(pairs, config.batch_size, config.uses_global)
    if not chunks:
        return ValidationLoss(float("nan"), float("nan"))
    outcomes = [forward_backward(store, chunk, config, backward=False) for chunk in chunks]
    return ValidationLoss(float(np.mean([o.local for o in outcomes])), float(np.mean([o.total for o in outcomes])))


def _metadata(config: TrainConfig, vocab: Vocabulary, epoch: int, rmsprop: RmsPropConfig, step: int) -> Dict:
    return {
        "kind": MODEL_KIND,
        "config": config.model_dump(mode="json"),
        "vocab": vocab.words(),
        "epoch": epoch,
        "learning_rate": rmsprop.learning_rate,
        "step": step,
    }


def _with_vocab_size(config: TrainConfig, size: int) -> TrainConfig:
    if config.dims.vocab_size == size:
        return config
    return config.model_copy(update={"dims": config.dims.model_copy(update={"vocab_size": size})})


class TrainResult(NamedTuple):
    store: ParameterStore
    checkpoints: List[Path]
    history: List[Dict[str, float]]


def train(config: TrainConfig, train_pairs: Sequence[ParaphrasePair], vocab: Vocabulary,
          out_dir: Union[str, Path], val_pairs: Sequence[ParaphrasePair] = (),
          resume: Optional[Union[str, Path]] = None) -> TrainResult:
    """Train for ``config.epochs`` epochs, writing one checkpoint per epoch.

    ``ckpt-0000.bin`` holds the initial parameters. With ``resume`` the store,
    RMSProp state, learning rate and step counter come from that checkpoint and
    training continues with the epoch after the one it recorded.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = _with_vocab_size(config, len(vocab))
    if not train_pairs:
        raise DataError("no training pairs")

    metrics_path = out_dir / METRICS_NAME
    checkpoints: List[Path] = []
    if resume is not None:
        store, meta = load_model(resume)
        if meta["vocab"] != vocab.words():
            raise CheckpointError(f"{resume}: vocabulary differs from the training vocabulary")
        start_epoch = int(meta["epoch"])
        rmsprop = config.rmsprop.model_copy(update={"learning_rate": float(meta["learning_rate"])})
        step = int(meta.get("step", 0))
        last = Path(resume)
        logger.info("resuming from %s at epoch %d (lr=%.6g)", resume, start_epoch, rmsprop.learning_rate)
    else:
        store = build_store(config.dims, config.seed, shared=config.shared)
        start_epoch, rmsprop, step = 0, config.rmsprop, 0
        last = save_checkpoint(out_dir / checkpoint_name(0), store, _metadata(config, vocab, 0, rmsprop, 0))
        checkpoints.append(last)
        metrics_path.write_text("\t".join(METRICS_COLUMNS) + "\n", encoding="utf-8")

    history: List[Dict[str, float]] = []
    for epoch in range(start_epoch + 1, config.epochs + 1):
        reports = []
        for batch in batches(train_pairs, config.batch_size, config.seed, epoch, config.uses_global):
            reports.append(train_step(store, batch, config, rmsprop, step, str(last)))
            step += 1
        if not reports:
            raise DataError(f"{len(train_pairs)} training pairs do not fill a batch of {config.batch_size}")
        clipped = sum(r.clipped for r in reports)
        if clipped:
            logger.warning("epoch %d: gradient clipped on %d of %d batches", epoch, clipped, len(reports))
        floor_hits = sum(r.log_floor_hits for r in reports)
        if floor_hits:
            logger.warning("epoch %d: %d target probabilities clamped to the log floor", epoch, floor_hits)
        val = validation_loss(store, val_pairs, config)
        row = {
            "epoch": epoch,
            "lr": rmsprop.learning_rate,
            "train_local": float(np.mean([r.local for r in reports])),
            "train_global": float(np.mean([r.global_ for r in reports])),
            "train_total": float(np.mean([r.total for r in reports])),
            "val_total": val.total,
            "val_local": val.local,
        }
        history.append(row)
        logger.info("epoch %d lr=%.6g local=%.6f global=%.6f total=%.6f val=%.6f val_local=%.6f",
                    epoch, row["lr"], row["train_local"], row["train_global"], row["train_total"],
                    row["val_total"], row["val_local"])
        with metrics_path.open("a", encoding="utf-8") as handle:
            handle.write("\t".join([str(epoch)] + [repr(row[c]) for c in METRICS_COLUMNS[1:]]) + "\n")

        rmsprop = epoch_decay(rmsprop)
        last = save_checkpoint(out_dir / checkpoint_name(epoch), store, _metadata(config, vocab, epoch, rmsprop, step))
        checkpoints.append(last)
    return TrainResult(store, checkpoints, history)


def load_model(path: Union[str, Path]) -> Tuple[ParameterStore, Dict]:
    """Load a model checkpoint and check that its metadata describes a trained model."""
    store, meta = load_checkpoint(path)
    if meta.get("kind") != MODEL_KIND:
        raise CheckpointError(f"{path}: not a model checkpoint (kind={meta.get('kind')!r})")
    for key in ("config", "vocab", "epoch", "learning_rate"):
        if key not in meta:
            raise CheckpointError(f"{path}: metadata is missing '{key}'")
    return store, meta


def model_parts(path: Union[str, Path]) -> Tuple[ParameterStore, Vocabulary, TrainConfig]:
    store, meta = load_model(path)
    return store, Vocabulary(meta["vocab"]), TrainConfig.model_validate(meta["config"])


def check_vocabulary(store: ParameterStore, vocab: Vocabulary) -> None:
    """Check that the embedding tensors and the vocabulary describe the same word list."""
    rows = store.value("enc.embed").shape[0]
    if rows != len(vocab):
        raise CheckpointError(f"checkpoint has {rows} embedding rows but the vocabulary has {len(vocab)} words")


def source_oov_rate(vocab: Vocabulary, sentences: Sequence[Sequence[str]]) -> float:
    """Share of tokens in ``sentences`` that the vocabulary maps to UNK; NaN when there are none."""
    total = sum(len(s) for s in sentences)
    if total == 0:
        return float("nan")
    missing = sum(1 for s in sentences for tok in s if tok not in vocab)
    return missing / total


def generate(store: ParameterStore, vocab: Vocabulary, sentences: Sequence[Sequence[str]],
             t_max: int) -> List[List[str]]:
    """Greedy paraphrase for every tokenized sentence."""
    check_vocabulary(store, vocab)
    out = []
    for tokens in sentences:
        ids = vocab.encode(tokens, t_max)
        if not ids:
            out.append([])
            continue
        f, _ = encode(ids, store, "enc")
        out.append(vocab.decode(generate_greedy(f, store, t_max)))
    return out


def evaluate(store: ParameterStore, vocab: Vocabulary, rows: Sequence[Tuple[Sequence[str], Sequence[str]]],
             t_max: int, smoothing: bool = False) -> Tuple[MetricReport, List[List[str]]]:
    """Generate for every source and score the output against its reference.

    Args:
        store: Trained model parameters.
        vocab: The vocabulary stored with the checkpoint.
        rows: Tokenized (source, reference) pairs.
        t_max: Generation length limit.
        smoothing: Add-one smoothing for BLEU orders above one.

    Returns:
        The corpus report, with the source OOV rate filled in, and the hypotheses.

    Raises:
        CheckpointError: No source token is known to the checkpoint vocabulary.
    """
    sources = [src for src, _ in rows]
    oov = source_oov_rate(vocab, sources)
    if oov == 1.0:
        raise CheckpointError("vocabulary mismatch: no source token of the test data is in the checkpoint vocabulary")
    if oov > OOV_WARNING_RATE:
        logger.warning("%.1f%% of source tokens are out of vocabulary", 100.0 * oov)
    hypotheses = generate(store, vocab, sources, t_max)
    references = [list(ref) for _, ref in rows]
    report = corpus_report(hypotheses, references, smoothing=smoothing)
    if not np.isnan(oov):
        report = report.model_copy(update={"source_oov_rate": oov})
    return report, hypotheses


def file_digest(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir: Union[str, Path], config: TrainConfig, data_files: Sequence[Union[str, Path]]) -> RunManifest:
    """Record config, seed and data digests before training starts."""
    manifest = RunManifest(
        config=config,
        seed=config.seed,
        data_digests={str(p): file_digest(p) for p in data_files},
        code_version=__version__,
        started_at=_now(),
    )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    return manifest


def finish_manifest(out_dir: Union[str, Path], manifest: RunManifest) -> RunManifest:
    manifest = manifest.model_copy(update={"finished_at": _now()})
    (Path(out_dir) / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    return manifest


def verify_manifest(out_dir: Union[str, Path], data_files: Sequence[Union[str, Path]]) -> RunManifest:
    """On resume, check the data files still match the digests the run started with."""
    path = Path(out_dir) / MANIFEST_NAME
    if not path.is_file():
        raise CheckpointError(f"no run manifest in {out_dir}")
    manifest = RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
    for p in data_files:
        expected = manifest.data_digests.get(str(p))
        if expected is not None and expected != file_digest(p):
            raise CheckpointError(f"{p} changed since the run started (digest mismatch)")
    return manifest
