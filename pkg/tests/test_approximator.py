import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fsnid.approximator import (
    HIDDEN,
    DenseParams,
    NonFiniteGradient,
    OptimizerState,
    RecurrentParams,
    dense_backward,
    dense_forward,
    opt_step,
    recurrent_backward,
    recurrent_forward,
)


def fd_rel_errors(forward, backward, params, x, upstream, h=1e-5, floor=1e-6):
    grads = backward(params, x, upstream)
    errs = []
    for p, g in zip(params.arrays(), grads.arrays()):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            keep = flat[k]
            flat[k] = keep + h
            up = np.sum(upstream * forward(params, x))
            flat[k] = keep - h
            down = np.sum(upstream * forward(params, x))
            flat[k] = keep
            num = (up - down) / (2 * h)
            errs.append(abs(num - gflat[k]) / max(abs(num), abs(gflat[k]), floor))
    return np.array(errs)


# ----------------------------------------------------------------------------- dense


def dense_oracle(p, x):
    hidden = []
    for j in range(p.hidden):
        s = p.b1[j] + sum(x[k] * p.w1[k, j] for k in range(len(x)))
        hidden.append(max(s, 0.0))
    return p.b2[0] + sum(hidden[j] * p.w2[j, 0] for j in range(p.hidden))


def test_default_width_and_finite_init(rng):
    p = DenseParams.init(3, rng)
    assert p.hidden == HIDDEN == 50
    assert p.is_finite()
    r = RecurrentParams.init(3, rng)
    assert r.hidden == 50 and r.is_finite()


def test_zero_network_outputs_zero(rng):
    p = DenseParams.init(4, rng).zeros_like()
    assert dense_forward(p, rng.normal(size=4)) == 0.0


def test_single_unit_linear_regime():
    p = DenseParams(w1=np.array([[0.0], [2.5], [0.0]]), b1=np.zeros(1),
                    w2=np.ones((1, 1)), b2=np.zeros(1))
    assert dense_forward(p, np.array([-3.0, 0.7, 9.0])) == pytest.approx(0.7 * 2.5)


def test_dense_matches_straight_line_oracle(rng):
    p = DenseParams.init(5, rng, hidden=12)
    for _ in range(5):
        x = rng.normal(size=5)
        assert abs(dense_forward(p, x) - dense_oracle(p, x)) <= 1e-12


def test_dense_batch_equals_rows(rng):
    p = DenseParams.init(3, rng)
    X = rng.normal(size=(7, 3))
    np.testing.assert_allclose(dense_forward(p, X), [dense_forward(p, x) for x in X],
                               rtol=0, atol=1e-14)


def test_dense_b2_gradient_is_upstream(rng):
    p = DenseParams.init(3, rng)
    g = dense_backward(p, rng.normal(size=3), 1.7)
    assert g.b2.tolist() == [1.7]


def test_dense_zero_upstream(rng):
    p = DenseParams.init(3, rng)
    g = dense_backward(p, rng.normal(size=3), 0.0)
    assert all(np.all(a == 0) for a in g.arrays())


def test_dense_finite_differences(rng):
    p = DenseParams.init(4, rng)
    errs = fd_rel_errors(dense_forward, dense_backward, p, rng.normal(size=(6, 4)),
                         rng.normal(size=6))
    assert errs.max() <= 1e-4


@given(st.integers(1, 5), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_dense_gradient_property(d, hidden, seed):
    rng = np.random.default_rng(seed)
    p = DenseParams.init(d, rng, hidden=hidden)
    x = rng.normal(size=(3, d))
    assert fd_rel_errors(dense_forward, dense_backward, p, x, rng.normal(size=3)).max() <= 1e-4


# ----------------------------------------------------------------------------- recurrent


def _logistic(z):
    return 1.0 / (1.0 + math.exp(-z))


def single_step_oracle(p, x):
    """Scalar LSTM step from zero state, plus the analytic gradient of its output."""
    H = p.hidden
    z = [p.b[j] + sum(x[k] * p.wx[k, j] for k in range(len(x))) for j in range(4 * H)]
    i = [_logistic(z[j]) for j in range(H)]
    o = [_logistic(z[2 * H + j]) for j in range(H)]
    g = [math.tanh(z[3 * H + j]) for j in range(H)]
    c = [i[j] * g[j] for j in range(H)]
    h = [o[j] * math.tanh(c[j]) for j in range(H)]
    out = p.b_out[0] + sum(h[j] * p.w_out[j, 0] for j in range(H))
    dz = [0.0] * (4 * H)
    for j in range(H):
        dh = p.w_out[j, 0]
        tc = math.tanh(c[j])
        dc = dh * o[j] * (1 - tc * tc)
        dz[j] = dc * g[j] * i[j] * (1 - i[j])
        dz[H + j] = 0.0  # forget gate multiplies a zero cell state
        dz[2 * H + j] = dh * tc * o[j] * (1 - o[j])
        dz[3 * H + j] = dc * i[j] * (1 - g[j] ** 2)
    grads = RecurrentParams(
        wx=np.outer(x, dz), wh=np.zeros_like(p.wh), b=np.array(dz),
        w_out=np.array(h)[:, None], b_out=np.ones(1))
    return out, grads


def small_recurrent():
    # fixed small weights, 2-dim input, hidden 2
    vals = np.linspace(-0.4, 0.4, 2 * 8).reshape(2, 8)
    return RecurrentParams(wx=vals, wh=vals[::-1].repeat(1, 0) * 0.5, b=np.linspace(0.1, -0.1, 8),
                           w_out=np.array([[0.3], [-0.7]]), b_out=np.array([0.05]))


def test_single_step_matches_hand_oracle():
    p = small_recurrent()
    x = np.array([0.8, -1.3])
    want, _ = single_step_oracle(p, x)
    assert recurrent_forward(p, x[None, :]) == pytest.approx(want, abs=1e-14)


def test_single_step_gradient_matches_derivation():
    p = small_recurrent()
    x = np.array([0.8, -1.3])
    _, want = single_step_oracle(p, x)
    got = recurrent_backward(p, x[None, :], 1.0)
    for name, a, b in zip(got.names(), got.arrays(), want.arrays()):
        np.testing.assert_allclose(a, b, atol=1e-14, err_msg=name)


def test_zero_recurrent_outputs_readout_bias(rng):
    p = RecurrentParams.init(3, rng).zeros_like()
    p.b_out[:] = 0.42
    assert recurrent_forward(p, rng.normal(size=(5, 3))) == 0.42


def test_duplicating_last_step_changes_output(rng):
    p = RecurrentParams.init(2, rng)
    seq = rng.normal(size=(4, 2))
    longer = np.vstack([seq, seq[-1:]])
    assert recurrent_forward(p, seq) != recurrent_forward(p, longer)


def test_recurrent_zero_upstream(rng):
    p = RecurrentParams.init(2, rng)
    g = recurrent_backward(p, rng.normal(size=(3, 2)), 0.0)
    assert all(np.all(a == 0) for a in g.arrays())


def test_recurrent_finite_differences_s10(rng):
    p = RecurrentParams.init(2, rng, hidden=6)
    errs = fd_rel_errors(recurrent_forward, recurrent_backward, p,
                         rng.normal(size=(3, 10, 2)), rng.normal(size=3), h=1e-6)
    assert errs.max() <= 1e-3


def test_vector_output_upstream(rng):
    p = DenseParams.init(3, rng, out_dim=4)
    x = rng.normal(size=(5, 3))
    up = rng.normal(size=(5, 4))
    g = dense_backward(p, x, up)
    np.testing.assert_allclose(g.b2, up.sum(0))
    with pytest.raises(ValueError, match="upstream shape"):
        dense_backward(p, x, np.ones((5, 3)))


def test_input_width_checked(rng):
    with pytest.raises(ValueError, match="width"):
        dense_forward(DenseParams.init(3, rng), np.ones(4))
    with pytest.raises(ValueError, match="features per step"):
        recurrent_forward(RecurrentParams.init(3, rng), np.ones((2, 4)))


# ----------------------------------------------------------------------------- optimizer


def test_zero_gradient_from_rest_leaves_params(rng):
    p = DenseParams.init(2, rng)
    before = p.copy()
    st_ = OptimizerState.for_params(p, lr=0.1)
    opt_step(st_, p, p.zeros_like())
    for a, b in zip(p.arrays(), before.arrays()):
        np.testing.assert_array_equal(a, b)
    assert st_.step == 1


def test_zero_gradient_decays_moments(rng):
    p = DenseParams.init(2, rng)
    st_ = OptimizerState.for_params(p)
    for m, v in zip(st_.m, st_.v):
        m += 1.0
        v += 1.0
    opt_step(st_, p, p.zeros_like())
    assert all(np.allclose(m, 0.9) for m in st_.m)
    assert all(np.allclose(v, 0.999) for v in st_.v)


def test_first_step_is_lr_times_normalised_gradient(rng):
    p = DenseParams.init(2, rng)
    before = p.copy()
    g = p.zeros_like()
    for a in g.arrays():
        a[...] = rng.normal(size=a.shape)
    st_ = OptimizerState.for_params(p, lr=0.01)
    opt_step(st_, p, g)
    for a, b, ga in zip(p.arrays(), before.arrays(), g.arrays()):
        np.testing.assert_allclose(b - a, 0.01 * ga / (np.abs(ga) + 1e-8), rtol=1e-12)


def test_constant_gradient_step_approaches_lr():
    p = DenseParams(w1=np.zeros((1, 1)), b1=np.zeros(1), w2=np.zeros((1, 1)), b2=np.zeros(1))
    g = DenseParams(w1=np.full((1, 1), 3.0), b1=np.full(1, -0.2), w2=np.full((1, 1), 1e-3),
                    b2=np.full(1, 50.0))
    st_ = OptimizerState.for_params(p, lr=1e-3)
    for _ in range(200):
        before = p.copy()
        opt_step(st_, p, g)
    steps = [float(np.abs(a - b).max()) for a, b in zip(p.arrays(), before.arrays())]
    np.testing.assert_allclose(steps, 1e-3, rtol=1e-4)


def test_opt_step_rejects_bad_gradients(rng):
    p = DenseParams.init(2, rng)
    st_ = OptimizerState.for_params(p)
    bad = p.zeros_like()
    bad.b1[0] = np.nan
    with pytest.raises(NonFiniteGradient, match="b1"):
        opt_step(st_, p, bad)
    with pytest.raises(ValueError, match="shape"):
        opt_step(st_, p, DenseParams.init(3, rng))


def test_params_dict_round_trip(rng):
    p = RecurrentParams.init(2, rng, hidden=3)
    q = RecurrentParams.from_dict(p.to_dict())
    for a, b in zip(p.arrays(), q.arrays()):
        np.testing.assert_array_equal(a, b)
