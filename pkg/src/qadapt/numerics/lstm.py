"""LSTM cells and stacked bidirectional encoders.

Gate layout inside the fused ``4H`` axis is input, forget, candidate, output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ops
from .rng import Rng
from .tensor import DimensionError, Op, Tensor, apply, parameter

INIT_SCALE = 0.08
FORGET_BIAS = 1.0


@dataclass
class LSTMParams:
    W_x: Tensor  # (d_in, 4H)
    W_h: Tensor  # (H, 4H)
    b: Tensor  # (4H,)

    @property
    def hidden(self) -> int:
        return self.W_h.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_x.shape[0]

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.W_x": self.W_x, f"{prefix}.W_h": self.W_h, f"{prefix}.b": self.b}


def init_lstm(rng: Rng, prefix: str, d_in: int, hidden: int) -> LSTMParams:
    W_x = rng.split(prefix + ".W_x").uniform(-INIT_SCALE, INIT_SCALE, (d_in, 4 * hidden))
    W_h = rng.split(prefix + ".W_h").uniform(-INIT_SCALE, INIT_SCALE, (hidden, 4 * hidden))
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = FORGET_BIAS
    return LSTMParams(parameter(W_x, prefix + ".W_x"), parameter(W_h, prefix + ".W_h"),
                      parameter(b, prefix + ".b"))


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, params: LSTMParams) -> tuple[Tensor, Tensor]:
    """One LSTM step built from primitive ops. Accepts (d,) or (B, d) rows."""
    H = params.hidden
    if x.shape[-1] != params.input_size:
        raise DimensionError(f"lstm_cell: input width {x.shape[-1]} != {params.input_size}")
    if h.shape[-1] != H or c.shape[-1] != H:
        raise DimensionError(f"lstm_cell: state widths {h.shape}, {c.shape} != hidden {H}")
    squeeze = x.ndim == 1
    if squeeze:
        x, h, c = (ops.reshape(t, (1, -1)) for t in (x, h, c))
    z = x @ params.W_x + h @ params.W_h + params.b
    i = ops.sigmoid(z[:, :H])
    f = ops.sigmoid(z[:, H:2 * H])
    g = ops.tanh(z[:, 2 * H:3 * H])
    o = ops.sigmoid(z[:, 3 * H:])
    c_new = f * c + i * g
    h_new = o * ops.tanh(c_new)
    if squeeze:
        h_new, c_new = ops.reshape(h_new, (H,)), ops.reshape(c_new, (H,))
    return h_new, c_new


class LSTMSeq(Op):
    """Run K independent LSTMs left-to-right from zero state.

    Shapes: x (K, B, T, d_in), W_x (K, d_in, 4H), W_h (K, H, 4H), b (K, 4H);
    output (K, B, T, H). Stacking directions on K keeps one Python loop.
    """

    name = "lstm_seq"

    @staticmethod
    def forward(x, W_x, W_h, b):
        K, B, T, _ = x.shape
        H = W_h.shape[1]
        # sigmoid(z) = (tanh(z / 2) + 1) / 2, so pre-scale the sigmoid gate
        # columns by 1/2 and take a single tanh per step
        scale = np.full(4 * H, 0.5)
        scale[2 * H:3 * H] = 1.0
        xw = (np.matmul(x, W_x[:, None]) + b[:, None, None, :]) * scale
        W_hs = W_h * scale
        gates = np.empty((T, K, B, 4 * H))
        cs = np.empty((T + 1, K, B, H))
        hs = np.empty((T + 1, K, B, H))
        tcs = np.empty((T, K, B, H))
        cs[0] = 0.0
        hs[0] = 0.0
        for t in range(T):
            gt = gates[t]
            np.tanh(xw[:, :, t] + np.matmul(hs[t], W_hs), out=gt)
            gt[..., :2 * H] *= 0.5
            gt[..., :2 * H] += 0.5
            gt[..., 3 * H:] *= 0.5
            gt[..., 3 * H:] += 0.5
            cs[t + 1] = gt[..., H:2 * H] * cs[t] + gt[..., :H] * gt[..., 2 * H:3 * H]
            tcs[t] = np.tanh(cs[t + 1])
            hs[t + 1] = gt[..., 3 * H:] * tcs[t]
        out = np.ascontiguousarray(hs[1:].transpose(1, 2, 0, 3))
        return out, (gates, cs, hs, tcs)

    @staticmethod
    def backward(ctx, g, x, W_x, W_h, b):
        gates, cs, hs, tcs = ctx
        T, K, B, H4 = gates.shape
        H = H4 // 4
        dz = np.empty((T, K, B, H4))
        dh_next = np.zeros((K, B, H))
        dc_next = np.zeros((K, B, H))
        gT = g.transpose(2, 0, 1, 3)
        W_hT = np.swapaxes(W_h, 1, 2)
        for t in range(T - 1, -1, -1):
            gt = gates[t]
            i, f, cand, o = gt[..., :H], gt[..., H:2 * H], gt[..., 2 * H:3 * H], gt[..., 3 * H:]
            dh = gT[t] + dh_next
            tc = tcs[t]
            dc = dc_next + dh * o * (1.0 - tc * tc)
            d = dz[t]
            d[..., :H] = dc * cand * i * (1.0 - i)
            d[..., H:2 * H] = dc * cs[t] * f * (1.0 - f)
            d[..., 2 * H:3 * H] = dc * i * (1.0 - cand * cand)
            d[..., 3 * H:] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = np.matmul(d, W_hT)
        # (K, B*T, 4H) with rows ordered (b, t) to match x
        dzf = dz.transpose(1, 2, 0, 3).reshape(K, B * T, H4)
        xf = x.reshape(K, B * T, -1)
        dx = np.matmul(dzf, np.swapaxes(W_x, 1, 2)).reshape(x.shape)
        dW_x = np.matmul(np.swapaxes(xf, 1, 2), dzf)
        hprev = hs[:-1].transpose(1, 0, 2, 3).reshape(K, T * B, H)
        dW_h = np.matmul(np.swapaxes(hprev, 1, 2), dz.transpose(1, 0, 2, 3).reshape(K, T * B, H4))
        db = dzf.sum(axis=1)
        return dx, dW_x, dW_h, db


def lstm_sequence(x: Tensor, params: LSTMParams) -> Tensor:
    """One LSTM over a (B, T, d_in) batch; returns (B, T, H) states."""
    if x.shape[-1] != params.input_size:
        raise DimensionError(f"lstm: input width {x.shape[-1]} != {params.input_size}")
    stack = lambda t: ops.reshape(t, (1,) + t.shape)  # noqa: E731
    out = apply(LSTMSeq, stack(x), stack(params.W_x), stack(params.W_h), stack(params.b))
    return ops.reshape(out, out.shape[1:])


def reverse_index(lengths: np.ndarray, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Index pair that reverses each row's first ``lengths[b]`` steps and
    leaves padding in place. The permutation is its own inverse."""
    t = np.arange(T)[None, :]
    L = np.asarray(lengths)[:, None]
    rev = np.where(t < L, L - 1 - t, t)
    rows = np.broadcast_to(np.arange(len(lengths))[:, None], rev.shape)
    return rows, rev


@dataclass
class BiLSTMLayer:
    fwd: LSTMParams
    bwd: LSTMParams

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        return {**self.fwd.tensors(prefix + ".fwd"), **self.bwd.tensors(prefix + ".bwd")}


def init_bilstm(rng: Rng, prefix: str, d_in: int, hidden: int, layers: int) -> list[BiLSTMLayer]:
    stack = []
    for k in range(layers):
        width = d_in if k == 0 else 2 * hidden
        stack.append(BiLSTMLayer(init_lstm(rng, f"{prefix}.{k}.fwd", width, hidden),
                                 init_lstm(rng, f"{prefix}.{k}.bwd", width, hidden)))
    return stack


def bilstm_encode(seq: Tensor, layers: list[BiLSTMLayer], lengths=None,
                  drop: Callable[[Tensor], Tensor] | None = None) -> Tensor:
    """Stacked bidirectional LSTM; returns the last layer's states.

    ``seq`` is (n, d) for one sequence or (B, T, d) for a right-padded batch
    with per-row ``lengths``. Output width is 2H (forward half first).
    Padded positions hold unspecified values that never reach valid ones.
    ``drop`` (training only) is applied to every layer's input.
    """
    if not layers:
        raise ValueError("bilstm_encode needs at least one layer")
    single = seq.ndim == 2
    if single:
        if seq.shape[0] == 0:
            raise ValueError("bilstm_encode: empty sequence")
        seq = ops.reshape(seq, (1,) + seq.shape)
        lengths = np.array([seq.shape[1]])
    B, T, _ = seq.shape
    if T == 0:
        raise ValueError("bilstm_encode: empty sequence")
    if lengths is None:
        lengths = np.full(B, T)
    lengths = np.asarray(lengths)
    if (lengths < 1).any():
        raise ValueError("bilstm_encode: empty sequence in batch")
    full = bool((lengths == T).all())
    rev = None if full else reverse_index(lengths, T)
    x = seq
    for layer in layers:
        if x.shape[-1] != layer.fwd.input_size:
            raise DimensionError(f"bilstm: input width {x.shape[-1]} != {layer.fwd.input_size}")
        if drop is not None:
            x = drop(x)
        x_r = x[:, ::-1] if full else x[rev]
        both = ops.concat([ops.reshape(x, (1,) + x.shape), ops.reshape(x_r, (1,) + x.shape)], axis=0)
        W_x = ops.concat([ops.reshape(p, (1,) + p.shape) for p in (layer.fwd.W_x, layer.bwd.W_x)], axis=0)
        W_h = ops.concat([ops.reshape(p, (1,) + p.shape) for p in (layer.fwd.W_h, layer.bwd.W_h)], axis=0)
        b = ops.concat([ops.reshape(p, (1,) + p.shape) for p in (layer.fwd.b, layer.bwd.b)], axis=0)
        out = apply(LSTMSeq, both, W_x, W_h, b)
        h_f = out[0]
        h_b = out[1, :, ::-1] if full else out[1][rev]
        x = ops.concat([h_f, h_b], axis=-1)
    if single:
        x = ops.reshape(x, x.shape[1:])
    return x
