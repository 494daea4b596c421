"""Sentiment probe: 5-class logistic regression over frozen encoder embeddings."""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .checkpoint import load_checkpoint, save_checkpoint
from .encoder import encode
from .errors import CheckpointError, DataError, ShapeError
from .models import ProbeConfig
from .optim import epoch_decay, rmsprop_step
from .params import ParameterStore
from .tensor import Tensor, check_finite, matmul, softmax
from .text import LabeledPhrase

logger = logging.getLogger(__name__)

PROBE_KIND = "pairdisc-probe"


class LogRegParams(BaseModel):
    """Weights ``W`` [classes x d] and bias ``b`` [classes]."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    W: np.ndarray
    b: np.ndarray

    @model_validator(mode="after")
    def validate_shapes(self) -> "LogRegParams":
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"W {self.W.shape} and b {self.b.shape} are inconsistent")
        check_finite("probe weights", self.W)
        check_finite("probe bias", self.b)
        return self

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    def to_store(self) -> ParameterStore:
        store = ParameterStore()
        store.add("probe.W", self.W)
        store.add("probe.b", self.b)
        return store.freeze()

    @classmethod
    def from_store(cls, store: ParameterStore) -> "LogRegParams":
        return cls(W=store.value("probe.W").copy(), b=store.value("probe.b").copy())


def embed_phrases(store: ParameterStore, phrases: Sequence[Union[LabeledPhrase, Sequence[int]]]) -> Tensor:
    """Stack the frozen encoder embedding of every phrase into an [n x d] matrix."""
    rows = []
    for phrase in phrases:
        ids = phrase.tokens if isinstance(phrase, LabeledPhrase) else list(phrase)
        f, _ = encode(ids, store, "enc")
        rows.append(f)
    if not rows:
        return np.zeros((0, store.value("enc.lstm.Wh").shape[0]))
    return np.vstack(rows)


def _check_inputs(params: LogRegParams, embeddings: Tensor) -> Tensor:
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2 or embeddings.shape[1] != params.input_dim:
        raise ShapeError(f"embeddings {embeddings.shape} do not match probe input size {params.input_dim}")
    return embeddings


def loss_and_grad(params: LogRegParams, embeddings: Tensor, labels: Sequence[int]) -> Tuple[float, Tensor, Tensor]:
    """Mean softmax cross-entropy and its gradient w.r.t. (W, b)."""
    X = _check_inputs(params, embeddings)
    y = np.asarray(labels, dtype=np.int64)
    probs = softmax(matmul(X, params.W.T) + params.b)
    n = X.shape[0]
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(n), y], 1e-300))))
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    return loss, dlogits.T @ X, dlogits.sum(axis=0)


def train_logreg(embeddings: Tensor, labels: Sequence[int], cfg: ProbeConfig = ProbeConfig(),
                 validation: Optional[Tuple[Tensor, Sequence[int]]] = None) -> LogRegParams:
    """Fit the probe with RMSProp for a fixed number of epochs from zero weights.

    Args:
        embeddings: Frozen encoder embeddings [n x d].
        labels: Class ids in ``0..cfg.num_classes - 1``.
        cfg: Optimizer, batching and epoch settings.
        validation: Optional held-out (embeddings, labels) whose loss is logged
            next to the training loss.

    Returns:
        The fitted probe weights.
    """
    X = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise ShapeError(f"need a non-empty [n x d] matrix with n labels, got {X.shape} and {y.shape}")
    if y.min() < 0 or y.max() >= cfg.num_classes:
        raise DataError(f"labels must lie in 0..{cfg.num_classes - 1}")
    if np.unique(y).size == 1:
        logger.warning("probe training data holds a single class (%d)", int(y[0]))

    params = LogRegParams(W=np.zeros((cfg.num_classes, X.shape[1])), b=np.zeros(cfg.num_classes))
    store = params.to_store()
    rms = cfg.rmsprop
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(X.shape[0])
        for start in range(0, order.size, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, dW, db = loss_and_grad(LogRegParams.from_store(store), X[idx], y[idx])
            store.accumulate("probe.W", dW)
            store.accumulate("probe.b", db)
            rmsprop_step(store, rms)
        rms = epoch_decay(rms)
        if epoch % 10 == 0 or epoch == cfg.epochs:
            current = LogRegParams.from_store(store)
            loss, _, _ = loss_and_grad(current, X, y)
            if validation is None:
                logger.info("probe epoch %d loss=%.6f", epoch, loss)
            else:
                val_loss, _, _ = loss_and_grad(current, *validation)
                logger.info("probe epoch %d loss=%.6f val_loss=%.6f", epoch, loss, val_loss)
    return LogRegParams.from_store(store)


def predict(params: LogRegParams, embeddings: Tensor) -> Tuple[np.ndarray, Tensor]:
    """Argmax labels (ties to the lowest class id) and class distributions."""
    X = _check_inputs(params, embeddings)
    probs = softmax(matmul(X, params.W.T) + params.b)
    return np.argmax(probs, axis=1), probs


def error_rate(predicted: Sequence[int], labels: Sequence[int]) -> float:
    predicted, labels = np.asarray(predicted), np.asarray(labels)
    if predicted.shape != labels.shape:
        raise ShapeError("predictions and labels differ in length")
    if labels.size == 0:
        raise DataError("no labeled phrases to score")
    return float(np.mean(predicted != labels))


def class_counts(predicted: Sequence[int], labels: Sequence[int], num_classes: int = 5) -> List[Dict[str, int]]:
    """Per gold class: number of phrases and how many were predicted correctly."""
    predicted, labels = np.asarray(predicted), np.asarray(labels)
    return [
        {"label": k, "total": int(np.sum(labels == k)), "correct": int(np.sum((labels == k) & (predicted == k)))}
        for k in range(num_classes)
    ]


def save_probe(path: Union[str, Path], params: LogRegParams, encoder_checkpoint: Union[str, Path],
               encoder_checksum: str) -> Path:
    meta = {
        "kind": PROBE_KIND,
        "encoder_checkpoint": str(encoder_checkpoint),
        "encoder_checksum": encoder_checksum,
    }
    return save_checkpoint(path, params.to_store(), meta)


def load_probe(path: Union[str, Path]) -> Tuple[LogRegParams, Dict]:
    store, meta = load_checkpoint(path)
    if meta.get("kind") != PROBE_KIND:
        raise CheckpointError(f"{path}: not a sentiment probe (kind={meta.get('kind')!r})")
    try:
        return LogRegParams.from_store(store), meta
    except KeyError as e:
        raise CheckpointError(f"{path}: missing probe parameter {e}") from e
