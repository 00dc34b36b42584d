"""Hot training loops for the Donsker-Varadhan estimators.

Both loops have a compiled implementation (``fsnid._kernels``) and a numpy
fallback with the same signature.  Which one ``dense_dv_train`` and
``recurrent_dv_train`` point at is decided at import: the extension is used
when it is importable, unless the environment variable ``FSNID_PURE_PYTHON``
is set to a non-empty value other than ``0``.
"""

from __future__ import annotations

import os

import numpy as np

from .approximator import (
    DenseParams,
    OptimizerState,
    RecurrentParams,
    dense_backward_cached,
    dense_forward_cached,
    opt_step,
    recurrent_backward_cached,
    recurrent_forward_cached,
)


def dv_value_and_upstream(t_joint: np.ndarray, t_marg: np.ndarray):
    """DV bound of one batch and d(-bound)/dT for the joint and marginal outputs."""
    b_j, b_m = t_joint.shape[0], t_marg.shape[0]
    mx = t_marg.max()
    e = np.exp(t_marg - mx)
    s = e.sum()
    bound = t_joint.mean() - (np.log(s / b_m) + mx)
    return bound, np.full(b_j, -1.0 / b_j), e / s


def dense_dv_train_py(X, y, joint, marg, params: DenseParams, state: OptimizerState,
                      trace: np.ndarray) -> int:
    """Numpy reference for the compiled loop; see :func:`dense_dv_train`."""
    n_classes = params.in_dim - X.shape[1]
    onehot = np.eye(n_classes)
    b = joint.shape[1]
    for t in range(joint.shape[0]):
        rows = joint[t]
        xr = X[rows]
        inp = np.concatenate(
            [np.concatenate([xr, onehot[y[rows]]], 1),
             np.concatenate([xr, onehot[y[marg[t]]]], 1)], 0)
        out, cache = dense_forward_cached(params, inp)
        bound, g_j, g_m = dv_value_and_upstream(out[:b, 0], out[b:, 0])
        trace[t] = bound
        if not np.isfinite(bound):
            return t
        g = np.concatenate([g_j, g_m])[:, None]
        opt_step(state, params, dense_backward_cached(params, cache, g))
    return joint.shape[0]


def _dense_dv_train_compiled(X, y, joint, marg, params: DenseParams, state: OptimizerState,
                             trace: np.ndarray) -> int:
    done = _ext.dense_dv_train(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.intp),
        np.ascontiguousarray(joint, dtype=np.intp),
        np.ascontiguousarray(marg, dtype=np.intp),
        params.w1, params.b1, params.w2.reshape(-1), params.b2,
        [a.reshape(-1) for a in state.m], [a.reshape(-1) for a in state.v],
        state.step, state.lr, state.beta1, state.beta2, state.eps, trace,
    )
    state.step += done
    return done


def recurrent_dv_train_py(X, y, joint, marg, params: RecurrentParams,
                          state: OptimizerState, trace: np.ndarray) -> int:
    """Ascent on the DV bound over windows of consecutive rows.

    ``joint`` and ``marg`` are ``(steps, b, s)`` row indices: feature windows,
    and the label windows paired with them for the marginal term.
    """
    n_classes = params.in_dim - X.shape[1]
    onehot = np.eye(n_classes)
    b = joint.shape[1]
    for t in range(joint.shape[0]):
        rows = joint[t]
        xr = X[rows]
        inp = np.concatenate(
            [np.concatenate([xr, onehot[y[rows]]], 2),
             np.concatenate([xr, onehot[y[marg[t]]]], 2)], 0)
        out, cache = recurrent_forward_cached(params, inp)
        bound, g_j, g_m = dv_value_and_upstream(out[:b, 0], out[b:, 0])
        trace[t] = bound
        if not np.isfinite(bound):
            return t
        g = np.concatenate([g_j, g_m])[:, None]
        opt_step(state, params, recurrent_backward_cached(params, cache, g))
    return joint.shape[0]


def _recurrent_dv_train_compiled(X, y, joint, marg, params: RecurrentParams,
                                 state: OptimizerState, trace: np.ndarray) -> int:
    done = _ext.recurrent_dv_train(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.intp),
        np.ascontiguousarray(joint, dtype=np.intp),
        np.ascontiguousarray(marg, dtype=np.intp),
        params.wx, params.wh, params.b, params.w_out.reshape(-1), params.b_out,
        list(state.m), list(state.v),
        state.step, state.lr, state.beta1, state.beta2, state.eps, trace,
    )
    state.step += done
    return done


def _load_extension():
    if os.environ.get("FSNID_PURE_PYTHON", "") not in ("", "0"):
        return None
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_ext = _load_extension()
BACKEND = "compiled" if _ext is not None else "python"
if _ext is not None:
    dense_dv_train = _dense_dv_train_compiled
    recurrent_dv_train = _recurrent_dv_train_compiled
else:
    dense_dv_train = dense_dv_train_py
    recurrent_dv_train = recurrent_dv_train_py
