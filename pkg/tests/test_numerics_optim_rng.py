import math

import numpy as np
import pytest

from qadapt.numerics.optim import OptimizerState, TrainingError, adam_step, clip_by_global_norm
from qadapt.numerics.rng import Rng, splitmix64
from qadapt.numerics.tensor import parameter


def test_zero_gradient_leaves_parameters():
    p = {"w": parameter(np.array([1.0, -2.0]))}
    adam_step(p, {"w": np.zeros(2)}, OptimizerState())
    assert np.array_equal(p["w"].data, [1.0, -2.0])


def test_single_adam_step_by_hand():
    p = {"w": parameter(np.array([1.0]))}
    state = OptimizerState(lr=0.1)
    adam_step(p, {"w": np.array([0.5])}, state)
    m = 0.1 * 0.5
    v = 0.001 * 0.25
    m_hat, v_hat = m / (1 - 0.9), v / (1 - 0.999)
    assert p["w"].data[0] == pytest.approx(1.0 - 0.1 * m_hat / (math.sqrt(v_hat) + 1e-8), abs=1e-15)
    assert state.step == 1


def test_two_steps_by_hand():
    p = {"w": parameter(np.array([0.0]))}
    state = OptimizerState(lr=0.01)
    w, m, v = 0.0, 0.0, 0.0
    for t, g in enumerate([0.3, -0.2], start=1):
        adam_step(p, {"w": np.array([g])}, state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w -= 0.01 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert p["w"].data[0] == pytest.approx(w, abs=1e-15)
    assert state.step == 2


def test_clip_scales_by_a_tenth():
    g = {"a": np.array([6.0, 0.0]), "b": np.array([0.0, 8.0])}
    clipped, norm = clip_by_global_norm(g, 1.0)
    assert norm == pytest.approx(10.0)
    assert np.allclose(clipped["a"], [0.6, 0.0]) and np.allclose(clipped["b"], [0.0, 0.8])
    # Adam's first moment sees the clipped gradient
    state = OptimizerState(clip_norm=1.0)
    params = {"a": parameter(np.zeros(2)), "b": parameter(np.zeros(2))}
    adam_step(params, g, state)
    assert np.allclose(state.m["a"], 0.1 * np.array([0.6, 0.0]))


def test_no_clip_below_threshold():
    g = {"a": np.array([3.0, 4.0])}
    clipped, _ = clip_by_global_norm(g, 10.0)
    assert clipped["a"] is g["a"]


def test_non_finite_gradient_names_parameter():
    p = {"reader.W_s": parameter(np.zeros(2))}
    with pytest.raises(TrainingError, match="reader.W_s"):
        adam_step(p, {"reader.W_s": np.array([np.nan, 0.0])}, OptimizerState())


def test_adam_is_deterministic():
    def run():
        p = {"w": parameter(np.linspace(-1, 1, 5))}
        s = OptimizerState()
        for k in range(10):
            adam_step(p, {"w": np.sin(p["w"].data * (k + 1))}, s)
        return p["w"].data.tobytes()
    assert run() == run()


# ---- rng


def test_splitmix64_reference_output():
    # first two outputs of splitmix64 seeded with 0
    s, a = splitmix64(0)
    _, b = splitmix64(s)
    assert (a, b) == (0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4)


def test_same_seed_same_stream():
    a, b = Rng(42), Rng(42)
    assert [a.next_u64() for _ in range(50)] == [b.next_u64() for _ in range(50)]


def test_split_streams_are_stable_and_distinct():
    r = Rng(3)
    x = r.split("reader.emb").uniform(0, 1, (8,))
    r.next_u64()  # the parent's position does not affect children
    assert np.array_equal(r.split("reader.emb").uniform(0, 1, (8,)), x)
    assert not np.array_equal(r.split("reader.W_s").uniform(0, 1, (8,)), x)


def test_uniform_range_and_normal_moments():
    r = Rng(5)
    u = r.uniform(-0.08, 0.08, (4000,))
    assert u.min() >= -0.08 and u.max() < 0.08
    z = Rng(6).normal((20000,), 2.0)
    assert abs(z.mean()) < 0.05 and abs(z.std() - 2.0) < 0.05
    assert Rng(6).normal((3, 5)).shape == (3, 5)


def test_randbelow_covers_range_evenly():
    r = Rng(11)
    counts = np.bincount([r.randbelow(7) for _ in range(7000)], minlength=7)
    assert counts.min() > 850 and counts.max() < 1150
    with pytest.raises(ValueError):
        r.randbelow(0)


def test_shuffle_and_sample_are_permutations():
    r = Rng(12)
    items = list(range(20))
    r.shuffle(items)
    assert sorted(items) == list(range(20)) and items != list(range(20))
    s = r.sample(range(10), 4)
    assert len(set(s)) == 4
