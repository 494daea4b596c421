"""Sentence encoder: word embedding front end followed by an LSTM.

The encoder's parameters live under a name prefix (``enc`` for the source
encoder, ``disc`` for an unshared discriminator copy)::

    {prefix}.embed      [V x e]
    {prefix}.conv       [w x e x e]   only when conv_width > 0
    {prefix}.lstm.Wx/Wh/b

The embedding f_i of a sentence is the last hidden state h_L.
"""
from typing import List, NamedTuple, Optional, Sequence, Union

import numpy as np

from .errors import DataError, ShapeError
from .lstm import LSTMCache, init_lstm, lstm_backward, lstm_forward
from .params import ParameterStore
from .tensor import Tensor, matmul

SOFT_ROW_TOLERANCE = 1e-6

EncoderInput = Union[Sequence[int], Tensor]


class EmbedCache(NamedTuple):
    ids: Optional[np.ndarray]    # hard path
    probs: Optional[Tensor]      # soft path [T x V]
    lookup: Tensor               # embedding rows before the convolution [T x e]


class EncoderCache(NamedTuple):
    prefix: str
    embed: EmbedCache
    lstm: LSTMCache


def init_encoder(store: ParameterStore, prefix: str, vocab_size: int, embed_dim: int, hidden_dim: int,
                 conv_width: int, rng: np.random.Generator, scale: float) -> None:
    store.add(f"{prefix}.embed", rng.uniform(-scale, scale, size=(vocab_size, embed_dim)))
    if conv_width:
        store.add(f"{prefix}.conv", rng.uniform(-scale, scale, size=(conv_width, embed_dim, embed_dim)))
    init_lstm(store, f"{prefix}.lstm", embed_dim, hidden_dim, rng, scale)


def encoder_names(store: ParameterStore, prefix: str) -> List[str]:
    return store.names(f"{prefix}.")


def _is_soft(seq: EncoderInput) -> bool:
    return isinstance(seq, np.ndarray) and seq.ndim == 2


def _conv_forward(x: Tensor, kernel: Tensor) -> Tensor:
    width = kernel.shape[0]
    pad = (width - 1) // 2
    T = x.shape[0]
    padded = np.zeros((T + 2 * pad, x.shape[1]))
    padded[pad:pad + T] = x
    out = np.zeros((T, kernel.shape[2]))
    for k in range(width):
        out += padded[k:k + T] @ kernel[k]
    return out


def _conv_backward(x: Tensor, kernel: Tensor, dout: Tensor):
    width = kernel.shape[0]
    pad = (width - 1) // 2
    T = x.shape[0]
    padded = np.zeros((T + 2 * pad, x.shape[1]))
    padded[pad:pad + T] = x
    dpadded = np.zeros_like(padded)
    dkernel = np.zeros_like(kernel)
    for k in range(width):
        dkernel[k] = padded[k:k + T].T @ dout
        dpadded[k:k + T] += dout @ kernel[k].T
    return dpadded[pad:pad + T], dkernel


def embed_tokens(seq: EncoderInput, store: ParameterStore, prefix: str = "enc"):
    """Embed a token-id sequence or a soft distribution sequence.

    Hard rows are ``W_e[id]``; soft rows are ``p @ W_e``. The optional temporal
    convolution (same-length zero padding) is applied to both.

    Returns (embedded rows [T x e], EmbedCache).
    """
    table = store.value(f"{prefix}.embed")
    V = table.shape[0]
    if _is_soft(seq):
        probs = np.asarray(seq, dtype=np.float64)
        if probs.shape[0] == 0:
            raise ShapeError("cannot embed an empty sequence")
        if probs.shape[1] != V:
            raise ShapeError(f"soft rows have width {probs.shape[1]}, vocabulary has {V}")
        sums = probs.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > SOFT_ROW_TOLERANCE) or np.any(probs < 0):
            raise DataError("soft rows must be probability distributions")
        lookup = matmul(probs, table)
        cache = EmbedCache(None, probs, lookup)
    else:
        ids = np.asarray(seq, dtype=np.int64)
        if ids.ndim != 1 or ids.size == 0:
            raise ShapeError("cannot embed an empty sequence")
        if ids.min() < 0 or ids.max() >= V:
            raise DataError(f"token id out of range for vocabulary of size {V}")
        lookup = table[ids]
        cache = EmbedCache(ids, None, lookup)
    conv_name = f"{prefix}.conv"
    if conv_name in store:
        return _conv_forward(lookup, store.value(conv_name)), cache
    return lookup, cache


def encode(seq: EncoderInput, store: ParameterStore, prefix: str = "enc"):
    """Return (sentence embedding f = h_L, EncoderCache)."""
    rows, embed_cache = embed_tokens(seq, store, prefix)
    hs, lstm_cache = lstm_forward(store, f"{prefix}.lstm", rows)
    return hs[-1].copy(), EncoderCache(prefix, embed_cache, lstm_cache)


def encode_backward(store: ParameterStore, cache: EncoderCache, df: Tensor) -> Optional[Tensor]:
    """Accumulate gradients for upstream ``dL/df``.

    For soft inputs the gradient w.r.t. the distribution rows is returned, so
    the caller can route it back into the decoder; hard inputs return None.
    """
    prefix = cache.prefix
    T, d = cache.lstm.hs.shape[0] - 1, cache.lstm.hs.shape[1]
    df = np.asarray(df, dtype=np.float64)
    if df.shape != (d,):
        raise ShapeError(f"upstream gradient shape {df.shape} != ({d},)")
    drows = lstm_backward(store, f"{prefix}.lstm", cache.lstm, np.zeros((T, d)), dh_final=df)

    conv_name = f"{prefix}.conv"
    if conv_name in store:
        drows, dkernel = _conv_backward(cache.embed.lookup, store.value(conv_name), drows)
        store.accumulate(conv_name, dkernel)

    table_name = f"{prefix}.embed"
    if cache.embed.probs is not None:
        store.accumulate(table_name, cache.embed.probs.T @ drows)
        return drows @ store.value(table_name).T
    dtable = np.zeros_like(store.value(table_name))
    np.add.at(dtable, cache.embed.ids, drows)
    store.accumulate(table_name, dtable)
    return None
