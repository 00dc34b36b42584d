"""Small scalar/vector-output networks with hand-written gradients.

Two architectures are provided:

* a one-hidden-layer relu perceptron (``DenseParams``), used as the statistic
  network of the Donsker-Varadhan bound and as the static classifier;
* a single LSTM layer followed by a dense readout (``RecurrentParams``), used
  for windows of consecutive rows.

Every forward function accepts a single example or a leading batch axis.
Backward functions return a parameter container of gradients, summed over the
batch and scaled by ``upstream``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

HIDDEN = 50


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    lim = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-lim, lim, size=shape)


class _ParamsMixin:
    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f.name) for f in fields(self)]

    def names(self) -> list[str]:
        return [f.name for f in fields(self)]

    def copy(self):
        return type(self)(*[a.copy() for a in self.arrays()])

    def zeros_like(self):
        return type(self)(*[np.zeros_like(a) for a in self.arrays()])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def to_dict(self) -> dict:
        return {n: a.tolist() for n, a in zip(self.names(), self.arrays())}

    @classmethod
    def from_dict(cls, d: dict):
        return cls(*[np.asarray(d[f.name], dtype=np.float64) for f in fields(cls)])


@dataclass
class DenseParams(_ParamsMixin):
    """``out = relu(x @ w1 + b1) @ w2 + b2``."""

    w1: np.ndarray  # (in_dim, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, out_dim)
    b2: np.ndarray  # (out_dim,)

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]

    @classmethod
    def init(cls, in_dim: int, rng: np.random.Generator, hidden: int = HIDDEN,
             out_dim: int = 1) -> "DenseParams":
        return cls(
            w1=_uniform(rng, in_dim, (in_dim, hidden)),
            b1=_uniform(rng, in_dim, (hidden,)),
            w2=_uniform(rng, hidden, (hidden, out_dim)),
            b2=_uniform(rng, hidden, (out_dim,)),
        )


@dataclass
class RecurrentParams(_ParamsMixin):
    """LSTM cell plus dense readout on the final hidden state.

    Gate blocks in ``wx``/``wh``/``b`` are stacked as input, forget, output,
    candidate, each ``hidden`` wide.
    """

    wx: np.ndarray  # (in_dim, 4*hidden)
    wh: np.ndarray  # (hidden, 4*hidden)
    b: np.ndarray  # (4*hidden,)
    w_out: np.ndarray  # (hidden, out_dim)
    b_out: np.ndarray  # (out_dim,)

    @property
    def in_dim(self) -> int:
        return self.wx.shape[0]

    @property
    def hidden(self) -> int:
        return self.wh.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w_out.shape[1]

    @classmethod
    def init(cls, in_dim: int, rng: np.random.Generator, hidden: int = HIDDEN,
             out_dim: int = 1) -> "RecurrentParams":
        fan = in_dim + hidden
        return cls(
            wx=_uniform(rng, fan, (in_dim, 4 * hidden)),
            wh=_uniform(rng, fan, (hidden, 4 * hidden)),
            b=_uniform(rng, fan, (4 * hidden,)),
            w_out=_uniform(rng, hidden, (hidden, out_dim)),
            b_out=_uniform(rng, hidden, (out_dim,)),
        )


def _squeeze_out(out: np.ndarray, single: bool):
    if single:
        out = out[0]
        return float(out[0]) if out.shape == (1,) else out
    return out[:, 0] if out.shape[1] == 1 else out


def _as_upstream(upstream, batch: int, out_dim: int) -> np.ndarray:
    g = np.asarray(upstream, dtype=np.float64)
    if g.ndim == 0:
        g = np.full((batch, out_dim), float(g))
    elif g.ndim == 1 and out_dim == 1:
        g = g[:, None]
    elif g.ndim == 1:
        g = g[None, :]
    if g.shape != (batch, out_dim):
        raise ValueError(f"upstream shape {g.shape} does not match output ({batch}, {out_dim})")
    return g


# --------------------------------------------------------------------------- dense


def _dense_input(p: DenseParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != p.in_dim:
        raise ValueError(f"expected input of width {p.in_dim}, got shape {x.shape}")
    return x, single


def dense_forward_cached(p: DenseParams, x: np.ndarray):
    """Batched forward pass returning ``(out, cache)``; ``out`` is ``(B, out_dim)``."""
    h = x @ p.w1 + p.b1
    a = np.maximum(h, 0.0)
    return a @ p.w2 + p.b2, (x, h, a)


def dense_backward_cached(p: DenseParams, cache, g: np.ndarray) -> DenseParams:
    x, h, a = cache
    ga = (g @ p.w2.T) * (h > 0)
    return DenseParams(w1=x.T @ ga, b1=ga.sum(0), w2=a.T @ g, b2=g.sum(0))


def dense_forward(p: DenseParams, x):
    """Evaluate the network on one example (1-D) or a batch (2-D)."""
    x, single = _dense_input(p, x)
    out, _ = dense_forward_cached(p, x)
    return _squeeze_out(out, single)


def dense_backward(p: DenseParams, x, upstream) -> DenseParams:
    """Gradient of ``sum(upstream * dense_forward(p, x))`` w.r.t. ``p``."""
    x, _ = _dense_input(p, x)
    g = _as_upstream(upstream, x.shape[0], p.out_dim)
    _, cache = dense_forward_cached(p, x)
    return dense_backward_cached(p, cache, g)


# --------------------------------------------------------------------------- recurrent


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _seq_input(p: RecurrentParams, seq) -> tuple[np.ndarray, bool]:
    seq = np.asarray(seq, dtype=np.float64)
    single = seq.ndim == 2
    if single:
        seq = seq[None]
    if seq.ndim != 3 or seq.shape[1] < 1:
        raise ValueError(f"expected (batch, steps, features) with steps >= 1, got {seq.shape}")
    if seq.shape[2] != p.in_dim:
        raise ValueError(f"expected {p.in_dim} features per step, got {seq.shape[2]}")
    return seq, single


def recurrent_forward_cached(p: RecurrentParams, seq: np.ndarray):
    """Batched forward pass over ``(B, S, in_dim)``; returns ``(out, cache)``."""
    B, S, _ = seq.shape
    H = p.hidden
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    # input projections for all steps in one matmul
    zx = (seq.reshape(B * S, -1) @ p.wx).reshape(B, S, 4 * H) + p.b
    steps = []
    for t in range(S):
        z = zx[:, t] + h @ p.wh
        gates = _sigmoid(z[:, :3 * H])
        i, f, o = gates[:, :H], gates[:, H:2 * H], gates[:, 2 * H:]
        g = np.tanh(z[:, 3 * H:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        steps.append((h_prev, c_prev, i, f, o, g, tc))
    return h @ p.w_out + p.b_out, (seq, h, steps)


def recurrent_backward_cached(p: RecurrentParams, cache, gout: np.ndarray) -> RecurrentParams:
    seq, h_last, steps = cache
    B, S, D = seq.shape
    H = p.hidden
    gwh = np.zeros_like(p.wh)
    dh = gout @ p.w_out.T
    dc = np.zeros((B, H))
    dz_all = np.empty((B, S, 4 * H))
    for t in reversed(range(S)):
        h_prev, c_prev, i, f, o, g, tc = steps[t]
        dc += dh * o * (1.0 - tc * tc)
        dz = dz_all[:, t]
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        dz[:, 3 * H:] = dc * i * (1.0 - g * g)
        gwh += h_prev.T @ dz
        dh = dz @ p.wh.T
        dc *= f
    flat = dz_all.reshape(B * S, 4 * H)
    return RecurrentParams(
        wx=seq.reshape(B * S, D).T @ flat,
        wh=gwh,
        b=flat.sum(0),
        w_out=h_last.T @ gout,
        b_out=gout.sum(0),
    )


def recurrent_forward(p: RecurrentParams, seq):
    """Run the LSTM from zero state over ``seq`` and read out the last hidden state.

    ``seq`` is ``(steps, in_dim)`` for one window or ``(batch, steps, in_dim)``.
    """
    seq, single = _seq_input(p, seq)
    out, _ = recurrent_forward_cached(p, seq)
    return _squeeze_out(out, single)


def recurrent_backward(p: RecurrentParams, seq, upstream) -> RecurrentParams:
    """Backpropagation through time; same contract as :func:`dense_backward`."""
    seq, _ = _seq_input(p, seq)
    gout = _as_upstream(upstream, seq.shape[0], p.out_dim)
    _, cache = recurrent_forward_cached(p, seq)
    return recurrent_backward_cached(p, cache, gout)


# --------------------------------------------------------------------------- optimizer


@dataclass
class OptimizerState:
    """Adam moment accumulators for one parameter container."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_params(cls, params, lr: float = 1e-4, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "OptimizerState":
        arrs = params.arrays()
        return cls(m=[np.zeros_like(a) for a in arrs], v=[np.zeros_like(a) for a in arrs],
                   lr=lr, beta1=beta1, beta2=beta2, eps=eps)


class NonFiniteGradient(FloatingPointError):
    pass


def opt_step(state: OptimizerState, params, grads):
    """One bias-corrected Adam update that *descends* ``grads``.

    Parameters are updated in place and returned together with the state.
    """
    p_arrs, g_arrs = params.arrays(), grads.arrays()
    if len(p_arrs) != len(g_arrs) or len(p_arrs) != len(state.m):
        raise ValueError("parameter / gradient / state length mismatch")
    for name, p, g in zip(params.names(), p_arrs, g_arrs):
        if p.shape != g.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for {name}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(p_arrs, g_arrs, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state
