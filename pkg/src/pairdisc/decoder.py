"""Conditional LSTM decoder: teacher-forced loss, soft outputs and greedy generation.

Parameters (prefix ``dec``)::

    dec.embed     [V x e]   target word embeddings W_d
    dec.bridge    [d x e]   maps f_i to the step -1 input; only when e != d
    dec.lstm.*              decoder LSTM W_dl
    dec.out.W     [d x V]   output projection W_v
    dec.out.b     [V]

Input sequence: [f_i (bridged), START, y_1 .. y_T]. The hidden states after
START .. y_T predict y_1 .. y_T, STOP.
"""
import logging
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ShapeError
from .lstm import LSTMCache, init_lstm, lstm_backward, lstm_forward, lstm_step
from .params import ParameterStore
from .tensor import Tensor, check_finite, matmul, softmax, softmax_backward
from .text import START, STOP

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


class DecoderCache(NamedTuple):
    f: Tensor
    inputs: np.ndarray      # START followed by the target ids
    targets: np.ndarray     # target ids followed by STOP
    lstm: LSTMCache
    outputs: Tensor         # hidden states that produce logits [T+1 x d]
    probs: Tensor           # [T+1 x V]
    floor_hits: int


def init_decoder(store: ParameterStore, vocab_size: int, embed_dim: int, hidden_dim: int,
                 rng: np.random.Generator, scale: float) -> None:
    store.add("dec.embed", rng.uniform(-scale, scale, size=(vocab_size, embed_dim)))
    if embed_dim != hidden_dim:
        store.add("dec.bridge", rng.uniform(-scale, scale, size=(hidden_dim, embed_dim)))
    init_lstm(store, "dec.lstm", embed_dim, hidden_dim, rng, scale)
    store.add("dec.out.W", rng.uniform(-scale, scale, size=(hidden_dim, vocab_size)))
    store.add("dec.out.b", np.zeros(vocab_size))


def _first_input(store: ParameterStore, f: Tensor) -> Tensor:
    if "dec.bridge" in store:
        return f @ store.value("dec.bridge")
    return f


def decode_teacher_forced(f: Tensor, target: Sequence[int], store: ParameterStore) -> Tuple[Tensor, float, DecoderCache]:
    """Teacher-forced pass.

    Returns the soft sequence (the T distributions that predict the target
    tokens), the local loss ``-(1/(T+1)) * sum log p[y]`` over the target
    tokens plus STOP, and the cache for :func:`decode_backward`.
    """
    f = np.asarray(f, dtype=np.float64)
    d = store.value("dec.lstm.Wh").shape[0]
    if f.shape != (d,):
        raise ShapeError(f"sentence embedding has shape {f.shape}, decoder expects ({d},)")
    target = np.asarray(target, dtype=np.int64)
    if target.ndim != 1 or target.size == 0:
        raise ShapeError("target sequence must be non-empty")
    inputs = np.concatenate(([START], target))
    targets = np.concatenate((target, [STOP]))

    table = store.value("dec.embed")
    xs = np.vstack([_first_input(store, f)[None, :], table[inputs]])
    hs, lstm_cache = lstm_forward(store, "dec.lstm", xs)
    outputs = hs[1:]
    logits = matmul(outputs, store.value("dec.out.W")) + store.value("dec.out.b")
    probs = softmax(logits)
    check_finite("decoder probabilities", probs)

    picked = probs[np.arange(targets.size), targets]
    floor_hits = int(np.count_nonzero(picked < LOG_FLOOR))
    if floor_hits:
        logger.debug("log floor hit on %d decoder step(s)", floor_hits)
    loss = float(-np.mean(np.log(np.maximum(picked, LOG_FLOOR))))
    cache = DecoderCache(f, inputs, targets, lstm_cache, outputs, probs, floor_hits)
    return probs[:-1], loss, cache


def decode_backward(store: ParameterStore, cache: DecoderCache, local_scale: float,
                    dsoft: Optional[Tensor] = None) -> Tensor:
    """Accumulate decoder gradients and return dL/df.

    ``local_scale`` multiplies the local loss of this example; ``dsoft`` is the
    upstream gradient w.r.t. the soft sequence (from the discriminator).
    """
    steps = cache.targets.size
    dlogits = np.zeros_like(cache.probs)
    if local_scale:
        dlogits += cache.probs
        dlogits[np.arange(steps), cache.targets] -= 1.0
        dlogits *= local_scale / steps
    if dsoft is not None:
        dsoft = np.asarray(dsoft, dtype=np.float64)
        if dsoft.shape != (steps - 1, cache.probs.shape[1]):
            raise ShapeError(f"soft-sequence gradient shape {dsoft.shape} does not match the cache")
        dlogits[:-1] += softmax_backward(cache.probs[:-1], dsoft)

    W_out = store.value("dec.out.W")
    store.accumulate("dec.out.W", cache.outputs.T @ dlogits)
    store.accumulate("dec.out.b", dlogits.sum(axis=0))
    dhs = np.zeros((steps + 1, W_out.shape[0]))
    dhs[1:] = dlogits @ W_out.T
    dxs = lstm_backward(store, "dec.lstm", cache.lstm, dhs)

    dtable = np.zeros_like(store.value("dec.embed"))
    np.add.at(dtable, cache.inputs, dxs[1:])
    store.accumulate("dec.embed", dtable)

    dx_first = dxs[0]
    if "dec.bridge" in store:
        store.accumulate("dec.bridge", np.outer(cache.f, dx_first))
        return store.value("dec.bridge") @ dx_first
    return dx_first


def generate_greedy(f: Tensor, store: ParameterStore, t_max: int) -> List[int]:
    """Free-running argmax decoding; stops at STOP or after ``t_max`` tokens.

    Ties go to the lowest id (``numpy.argmax`` returns the first maximum).
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    f = np.asarray(f, dtype=np.float64)
    d = store.value("dec.lstm.Wh").shape[0]
    h, c = np.zeros(d), np.zeros(d)
    h, c = lstm_step(store, "dec.lstm", _first_input(store, f), h, c)
    table = store.value("dec.embed")
    W_out, b_out = store.value("dec.out.W"), store.value("dec.out.b")
    token = START
    out: List[int] = []
    for _ in range(t_max):
        h, c = lstm_step(store, "dec.lstm", table[token], h, c)
        token = int(np.argmax(h @ W_out + b_out))
        if token == STOP:
            break
        out.append(token)
    return out
