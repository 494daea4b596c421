"""Single-layer LSTM over a sequence of input rows, forward and backward.

Gate layout along the 4d axis is (input, forget, output, candidate):

    z_t = x_t Wx + h_{t-1} Wh + b
    i, f, o = sigmoid(z[:d]), sigmoid(z[d:2d]), sigmoid(z[2d:3d])
    g = tanh(z[3d:])
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)

with zero initial state.
"""
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .errors import ShapeError
from .params import ParameterStore
from .tensor import Tensor, check_finite, matmul, sigmoid


class LSTMCache(NamedTuple):
    xs: Tensor     # [T x e]
    hs: Tensor     # [T+1 x d], hs[0] is the zero initial state
    cs: Tensor     # [T+1 x d]
    gates: Tensor  # [T x 4d], post-activation
    tanh_c: Tensor  # [T x d]


def init_lstm(store: ParameterStore, prefix: str, input_dim: int, hidden_dim: int,
              rng: np.random.Generator, scale: float) -> None:
    """Register ``{prefix}.Wx``, ``{prefix}.Wh`` and ``{prefix}.b`` with forget bias 1.0."""
    d = hidden_dim
    store.add(f"{prefix}.Wx", rng.uniform(-scale, scale, size=(input_dim, 4 * d)))
    store.add(f"{prefix}.Wh", rng.uniform(-scale, scale, size=(d, 4 * d)))
    bias = np.zeros(4 * d)
    bias[d:2 * d] = 1.0
    store.add(f"{prefix}.b", bias)


def lstm_forward(store: ParameterStore, prefix: str, xs: Tensor) -> Tuple[Tensor, LSTMCache]:
    """Run the LSTM over ``xs`` and return (hidden states h_1..h_T, cache)."""
    Wx, Wh, b = store.value(f"{prefix}.Wx"), store.value(f"{prefix}.Wh"), store.value(f"{prefix}.b")
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ShapeError(f"{prefix}: expected a non-empty [T x e] input, got shape {xs.shape}")
    if xs.shape[1] != Wx.shape[0]:
        raise ShapeError(f"{prefix}: input width {xs.shape[1]} != {Wx.shape[0]}")
    T, d = xs.shape[0], Wh.shape[0]
    hs = np.zeros((T + 1, d))
    cs = np.zeros((T + 1, d))
    gates = np.zeros((T, 4 * d))
    tanh_c = np.zeros((T, d))
    xw = matmul(xs, Wx) + b
    for t in range(T):
        z = xw[t] + hs[t] @ Wh
        ifo = sigmoid(z[:3 * d])
        g = np.tanh(z[3 * d:])
        gates[t, :3 * d] = ifo
        gates[t, 3 * d:] = g
        cs[t + 1] = ifo[d:2 * d] * cs[t] + ifo[:d] * g
        tanh_c[t] = np.tanh(cs[t + 1])
        hs[t + 1] = ifo[2 * d:3 * d] * tanh_c[t]
    check_finite(f"{prefix} hidden states", hs)
    return hs[1:], LSTMCache(xs, hs, cs, gates, tanh_c)


def lstm_step(store: ParameterStore, prefix: str, x: Tensor, h: Tensor, c: Tensor) -> Tuple[Tensor, Tensor]:
    """One recurrence step, used by free-running generation."""
    Wx, Wh, b = store.value(f"{prefix}.Wx"), store.value(f"{prefix}.Wh"), store.value(f"{prefix}.b")
    d = Wh.shape[0]
    z = x @ Wx + b + h @ Wh
    ifo = sigmoid(z[:3 * d])
    g = np.tanh(z[3 * d:])
    c_new = ifo[d:2 * d] * c + ifo[:d] * g
    h_new = ifo[2 * d:3 * d] * np.tanh(c_new)
    return h_new, c_new


def lstm_backward(store: ParameterStore, prefix: str, cache: LSTMCache, dhs: Tensor,
                  dh_final: Optional[Tensor] = None) -> Tensor:
    """Backpropagate through time.

    ``dhs`` is the upstream gradient for every output h_1..h_T ([T x d], may be
    all zero); ``dh_final`` is added to the last step. Parameter gradients are
    accumulated into ``store``; the gradient w.r.t. the inputs is returned.
    """
    Wx, Wh = store.value(f"{prefix}.Wx"), store.value(f"{prefix}.Wh")
    T, d = cache.xs.shape[0], Wh.shape[0]
    dhs = np.array(dhs, dtype=np.float64, copy=True).reshape(T, d)
    if dh_final is not None:
        dhs[-1] += dh_final
    dz_all = np.zeros((T, 4 * d))
    dh_next = np.zeros(d)
    dc_next = np.zeros(d)
    for t in range(T - 1, -1, -1):
        i = cache.gates[t, :d]
        f = cache.gates[t, d:2 * d]
        o = cache.gates[t, 2 * d:3 * d]
        g = cache.gates[t, 3 * d:]
        tc = cache.tanh_c[t]
        dh = dhs[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dz_all[t]
        dz[:d] = dc * g * i * (1.0 - i)
        dz[d:2 * d] = dc * cache.cs[t] * f * (1.0 - f)
        dz[2 * d:3 * d] = dh * tc * o * (1.0 - o)
        dz[3 * d:] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = Wh @ dz
    store.accumulate(f"{prefix}.Wx", cache.xs.T @ dz_all)
    store.accumulate(f"{prefix}.Wh", cache.hs[:-1].T @ dz_all)
    store.accumulate(f"{prefix}.b", dz_all.sum(axis=0))
    return dz_all @ Wx.T
