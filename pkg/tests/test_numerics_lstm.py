import math

import numpy as np
import pytest

from qadapt.numerics import ops
from qadapt.numerics.lstm import (BiLSTMLayer, LSTMParams, bilstm_encode, init_bilstm, init_lstm, lstm_cell,
                                  lstm_sequence)
from qadapt.numerics.rng import Rng
from qadapt.numerics.tensor import DimensionError, Tensor, parameter
from tests.helpers import gradcheck


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def _random_lstm(rng, d_in, hidden, scale=0.5):
    return LSTMParams(parameter(rng.normal(0, scale, (d_in, 4 * hidden))),
                      parameter(rng.normal(0, scale, (hidden, 4 * hidden))),
                      parameter(rng.normal(0, scale, 4 * hidden)))


def _random_stack(rng, d_in, hidden, layers):
    return [BiLSTMLayer(_random_lstm(rng, d_in if k == 0 else 2 * hidden, hidden),
                        _random_lstm(rng, d_in if k == 0 else 2 * hidden, hidden)) for k in range(layers)]


def test_zero_cell_stays_zero():
    p = LSTMParams(parameter(np.zeros((3, 8))), parameter(np.zeros((2, 8))), parameter(np.zeros(8)))
    h, c = lstm_cell(Tensor(np.zeros(3)), Tensor(np.zeros(2)), Tensor(np.zeros(2)), p)
    assert np.array_equal(h.data, np.zeros(2)) and np.array_equal(c.data, np.zeros(2))


def test_scalar_cell_matches_hand_arithmetic():
    # gate order: input, forget, candidate, output
    wx, wh, b = [0.5, -0.3, 0.8, 0.2], [0.1, 0.4, -0.6, 0.7], [0.0, 1.0, 0.1, -0.2]
    x, h0, c0 = 0.9, -0.4, 0.3
    z = [wx[k] * x + wh[k] * h0 + b[k] for k in range(4)]
    i, f, g, o = _sig(z[0]), _sig(z[1]), math.tanh(z[2]), _sig(z[3])
    c_ref = f * c0 + i * g
    h_ref = o * math.tanh(c_ref)
    p = LSTMParams(parameter([wx]), parameter([wh]), parameter(b))
    h, c = lstm_cell(Tensor([x]), Tensor([h0]), Tensor([c0]), p)
    assert h.item() == pytest.approx(h_ref, abs=1e-15)
    assert c.item() == pytest.approx(c_ref, abs=1e-15)


def test_cell_width_mismatch():
    p = init_lstm(Rng(0), "l", 3, 2)
    with pytest.raises(DimensionError):
        lstm_cell(Tensor(np.zeros(4)), Tensor(np.zeros(2)), Tensor(np.zeros(2)), p)
    with pytest.raises(DimensionError):
        lstm_cell(Tensor(np.zeros(3)), Tensor(np.zeros(3)), Tensor(np.zeros(2)), p)


def test_init_uses_forget_bias_and_small_weights():
    p = init_lstm(Rng(0), "l", 3, 4)
    assert np.array_equal(p.b.data[4:8], np.ones(4))
    assert np.abs(p.W_x.data).max() <= 0.08


@pytest.mark.parametrize("seed", range(20))
def test_lstm_cell_gradient(seed):
    rng = np.random.default_rng(seed)
    p = _random_lstm(rng, 3, 2)
    x, h, c = (parameter(rng.normal(size=k)) for k in (3, 2, 2))
    w = Tensor(rng.normal(size=2))

    def loss():
        h1, c1 = lstm_cell(x, h, c, p)
        return ops.sum(h1 * w) + ops.sum(c1 * c1)

    assert gradcheck(loss, [x, h, c, p.W_x, p.W_h, p.b]) <= 1e-4


def test_fused_sequence_equals_unrolled_cells():
    rng = np.random.default_rng(7)
    p = _random_lstm(rng, 3, 4)
    x = rng.normal(size=(2, 5, 3))
    fused = lstm_sequence(Tensor(x), p).data
    h = c = Tensor(np.zeros((2, 4)))
    for t in range(5):
        h, c = lstm_cell(Tensor(x[:, t]), h, c, p)
        assert np.allclose(fused[:, t], h.data, rtol=0, atol=1e-14)


def test_single_step_sequence_both_directions_same_input():
    rng = np.random.default_rng(8)
    layer = _random_stack(rng, 3, 2, 1)
    x = rng.normal(size=(1, 3))
    out = bilstm_encode(Tensor(x), layer).data
    zero = Tensor(np.zeros(2))
    hf, _ = lstm_cell(Tensor(x[0]), zero, zero, layer[0].fwd)
    hb, _ = lstm_cell(Tensor(x[0]), zero, zero, layer[0].bwd)
    assert np.allclose(out[0], np.concatenate([hf.data, hb.data]), atol=1e-15)


def test_three_layer_shape():
    layers = init_bilstm(Rng(1), "enc", 5, 4, 3)
    assert bilstm_encode(Tensor(np.ones((7, 5))), layers).shape == (7, 8)


def test_empty_sequence_is_argument_error():
    layers = init_bilstm(Rng(1), "enc", 5, 4, 1)
    with pytest.raises(ValueError):
        bilstm_encode(Tensor(np.ones((0, 5))), layers)


def _mirror(layers, hidden):
    """Swap the directions; deeper layers also swap their input halves."""
    out = []
    for k, layer in enumerate(layers):
        def flip(p):
            W_x = p.W_x.data if k == 0 else np.concatenate([p.W_x.data[hidden:], p.W_x.data[:hidden]])
            return LSTMParams(parameter(W_x), p.W_h, p.b)
        out.append(BiLSTMLayer(flip(layer.bwd), flip(layer.fwd)))
    return out


@pytest.mark.parametrize("layers", [1, 2, 3])
def test_reversal_swaps_halves(layers):
    rng = np.random.default_rng(layers)
    H = 3
    stack = _random_stack(rng, 4, H, layers)
    x = rng.normal(size=(6, 4))
    out = bilstm_encode(Tensor(x), stack).data
    rev = bilstm_encode(Tensor(x[::-1].copy()), _mirror(stack, H)).data
    swapped = np.concatenate([out[:, H:], out[:, :H]], axis=1)[::-1]
    assert np.allclose(rev, swapped, rtol=0, atol=1e-13)


def test_padded_batch_matches_single_sequences():
    rng = np.random.default_rng(9)
    stack = _random_stack(rng, 3, 2, 2)
    seqs = [rng.normal(size=(n, 3)) for n in (4, 1, 6)]
    batch = np.zeros((3, 6, 3))
    for b, s in enumerate(seqs):
        batch[b, :len(s)] = s
    out = bilstm_encode(Tensor(batch), stack, np.array([4, 1, 6])).data
    for b, s in enumerate(seqs):
        alone = bilstm_encode(Tensor(s), stack).data
        assert np.allclose(out[b, :len(s)], alone, rtol=0, atol=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_bilstm_gradient(seed):
    rng = np.random.default_rng(100 + seed)
    stack = _random_stack(rng, 3, 2, 2)
    x = parameter(rng.normal(size=(2, 4, 3)))
    lengths = np.array([4, 2])
    # padded positions are unspecified, so they carry no weight
    valid = np.arange(4)[None, :, None] < lengths[:, None, None]
    w = Tensor(rng.normal(size=(2, 4, 4)) * valid)
    params = [x] + [t for layer in stack for t in layer.tensors("l").values()]
    assert gradcheck(lambda: ops.sum(bilstm_encode(x, stack, lengths) * w), params, coords=6, seed=seed) <= 1e-4
