"""Pairwise discriminator: batch hinge loss over predicted vs. reference embeddings.

    L_global = sum_{i != j} max(0, s(p_i, g_j) - s(p_i, g_i) + margin)

where p_i is the embedding of the i-th decoder soft sequence and g_i the
embedding of the i-th reference, both produced by the encoder under the
discriminator prefix (``enc`` when shared, ``disc`` otherwise).
"""
import math
from typing import List, Literal, NamedTuple, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .encoder import EncoderCache, encode
from .errors import ShapeError
from .params import ParameterStore
from .tensor import Tensor, matmul

NORM_FLOOR = 1e-12


class BatchEmbeddings(BaseModel):
    """Row-aligned predicted (e_p) and ground-truth (e_g) embeddings."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    e_p: np.ndarray
    e_g: np.ndarray

    @model_validator(mode="after")
    def validate_shapes(self) -> "BatchEmbeddings":
        if self.e_p.ndim != 2 or self.e_p.shape != self.e_g.shape:
            raise ValueError(f"e_p {self.e_p.shape} and e_g {self.e_g.shape} must be equal [N x d] matrices")
        if self.e_p.shape[0] < 2:
            raise ValueError("a batch needs at least two examples to have negatives")
        if not (np.all(np.isfinite(self.e_p)) and np.all(np.isfinite(self.e_g))):
            raise ValueError("embeddings must be finite")
        return self

    @property
    def size(self) -> int:
        return self.e_p.shape[0]


class GlobalLossResult(NamedTuple):
    loss: float
    d_ep: Tensor
    d_eg: Tensor
    margins: Tensor   # off-diagonal margins, row-major over (i, j), i != j
    active: int


def embed_pair_batch(soft_sequences: Sequence[Tensor], targets: Sequence[Sequence[int]],
                     store: ParameterStore, prefix: str = "enc"
                     ) -> Tuple[BatchEmbeddings, List[EncoderCache], List[EncoderCache]]:
    """Encode soft sequences (f^p) and references (f^g) with the same encoder parameters."""
    if len(soft_sequences) != len(targets):
        raise ShapeError(f"{len(soft_sequences)} soft sequences but {len(targets)} targets")
    if len(targets) < 2:
        raise ShapeError("a batch needs at least two examples to have negatives")
    rows_p, rows_g, caches_p, caches_g = [], [], [], []
    for soft, target in zip(soft_sequences, targets):
        fp, cp = encode(np.asarray(soft, dtype=np.float64), store, prefix)
        fg, cg = encode(list(target), store, prefix)
        rows_p.append(fp)
        rows_g.append(fg)
        caches_p.append(cp)
        caches_g.append(cg)
    batch = BatchEmbeddings(e_p=np.vstack(rows_p), e_g=np.vstack(rows_g))
    return batch, caches_p, caches_g


def _normalize(x: Tensor) -> Tuple[Tensor, Tensor]:
    norms = np.maximum(np.linalg.norm(x, axis=1, keepdims=True), NORM_FLOOR)
    return x / norms, norms


def _normalize_backward(unit: Tensor, norms: Tensor, dunit: Tensor) -> Tensor:
    return (dunit - unit * np.sum(unit * dunit, axis=1, keepdims=True)) / norms


def global_loss(b: BatchEmbeddings, margin: float = 1.0,
                similarity: Literal["dot", "cosine"] = "dot",
                gradient_mode: Literal["gated", "ungated"] = "gated") -> GlobalLossResult:
    """Batch hinge loss and its gradients w.r.t. e_p and e_g.

    The gated mode returns the exact subgradient (a term contributes only when
    its margin is strictly positive). The ungated mode treats every off-diagonal
    term as active, whatever its margin.
    """
    e_p, e_g = b.e_p, b.e_g
    if similarity == "cosine":
        p, norm_p = _normalize(e_p)
        g, norm_g = _normalize(e_g)
    else:
        p, g = e_p, e_g
    N = p.shape[0]

    scores = matmul(p, g.T)
    margins = scores - np.diag(scores)[:, None] + margin
    off_diag = ~np.eye(N, dtype=bool)
    positive = (margins > 0) & off_diag
    loss = float(np.sum(margins[positive]))

    gate = off_diag if gradient_mode == "ungated" else positive
    A = gate.astype(np.float64)
    row_counts = A.sum(axis=1, keepdims=True)
    d_p = A @ g - row_counts * g
    d_g = A.T @ p - row_counts * p

    if similarity == "cosine":
        d_p = _normalize_backward(p, norm_p, d_p)
        d_g = _normalize_backward(g, norm_g, d_g)
    return GlobalLossResult(loss, d_p, d_g, margins[off_diag], int(positive.sum()))


def global_loss_bruteforce(b: BatchEmbeddings, margin: float = 1.0,
                           similarity: Literal["dot", "cosine"] = "dot") -> float:
    """Naive double-loop evaluation of the same loss, used as a reference."""
    P = [list(map(float, row)) for row in b.e_p]
    G = [list(map(float, row)) for row in b.e_g]

    def dot(u, v):
        total = 0.0
        for a, c in zip(u, v):
            total += a * c
        return total

    if similarity == "cosine":
        P = [[a / max(math.sqrt(dot(r, r)), NORM_FLOOR) for a in r] for r in P]
        G = [[a / max(math.sqrt(dot(r, r)), NORM_FLOOR) for a in r] for r in G]

    total = 0.0
    for i in range(len(P)):
        own = dot(P[i], G[i])
        for j in range(len(G)):
            if i == j:
                continue
            m = dot(P[i], G[j]) - own + margin
            if m > 0:
                total += m
    return total
