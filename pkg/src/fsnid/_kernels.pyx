# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled training loops for the Donsker-Varadhan statistic networks.

Each function mirrors its numpy counterpart in ``fsnid.kernels`` step for
step.  In the dense loop the first layer
weights and bias are packed into one ``(in_dim + 1, hidden)`` matrix and the
batch input carries a trailing column of ones, so both matrix products per
step (and the bias gradient) are single BLAS calls.  Everything else runs as C
loops with no Python calls between steps.
"""

import numpy as np
from libc.math cimport exp, log, isfinite, pow
from scipy.linalg.cython_blas cimport dgemm, dgemv


cdef extern from "_dv_inner.h" nogil:
    void fsnid_relu(double* h, long n)
    void fsnid_relu_grad(const double* a, double* ga, const double* w2, double coef, long n)
    void fsnid_adam(double* p, const double* g, double* m, double* v, long n,
                    double lr, double beta1, double beta2, double eps, double c1, double c2)
    void fsnid_lstm_prescale(double* z, long B, long H)
    void fsnid_lstm_gates(double* z, const double* c_prev, double* c, long B, long H)
    void fsnid_lstm_hidden(const double* z, const double* tc, double* h, long B, long H)
    void fsnid_lstm_cell_grad(const double* z, const double* tc, const double* c_prev,
                              const double* dh, double* dc, double* dz, long B, long H)


cdef inline void _gemm_rm(double* A, double* B, double* C, int m, int k, int n,
                          bint transpose_a) noexcept nogil:
    # row-major C (m x n) = A (m x k) @ B (k x n), or A^T @ B with A stored (k x m)
    cdef double one = 1.0, zero = 0.0
    cdef char nt = b'N'
    cdef char tt = b'T'
    if transpose_a:
        dgemm(&nt, &tt, &n, &m, &k, &one, B, &n, A, &m, &zero, C, &n)
    else:
        dgemm(&nt, &nt, &n, &m, &k, &one, B, &n, A, &k, &zero, C, &n)


cdef inline void _gemv_rm(double* A, double* x, double* y, int m, int n,
                          bint transpose_a) noexcept nogil:
    # row-major y = A (m x n) @ x, or A^T @ x
    cdef double one = 1.0, zero = 0.0
    cdef int inc = 1
    cdef char nt = b'N'
    cdef char tt = b'T'
    if transpose_a:
        dgemv(&nt, &n, &m, &one, A, &n, x, &inc, &zero, y, &inc)
    else:
        dgemv(&tt, &n, &m, &one, A, &n, x, &inc, &zero, y, &inc)


cdef inline void _gemm(char ta, char tb, int m, int n, int k, double* A, double* B,
                       double beta, double* C) noexcept nogil:
    # row-major C (m x n) = op(A) @ op(B) + beta * C
    cdef double one = 1.0
    cdef int lda = m if ta == b'T' else k
    cdef int ldb = k if tb == b'T' else n
    dgemm(&tb, &ta, &n, &m, &k, &one, B, &ldb, A, &lda, &beta, C, &n)


def dense_dv_train(const double[:, ::1] X, const Py_ssize_t[::1] y,
                   const Py_ssize_t[:, ::1] joint, const Py_ssize_t[:, ::1] marg,
                   double[:, ::1] w1, double[::1] b1, double[::1] w2, double[::1] b2,
                   list m, list v, long step0,
                   double lr, double beta1, double beta2, double eps,
                   double[::1] trace):
    """Run ``joint.shape[0]`` ascent steps in place; return the number completed.

    ``m``/``v`` hold Adam accumulators shaped like (w1, b1, w2, b2).  The loop
    stops early, returning the failing step index, if the bound is non-finite.
    """
    cdef Py_ssize_t n_steps = joint.shape[0]
    cdef Py_ssize_t b = joint.shape[1]
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t D = w1.shape[0]
    cdef Py_ssize_t H = w1.shape[1]
    cdef Py_ssize_t DA = D + 1
    cdef Py_ssize_t t, r, j, row, lab, R2 = 2 * b
    cdef double mx, s, mean_j, c1, c2, gsum
    cdef long step = step0
    cdef Py_ssize_t done = n_steps

    # packed first layer [w1; b1] and its Adam moments
    W_a = np.vstack([np.asarray(w1), np.asarray(b1)[None, :]])
    mW_a = np.vstack([np.asarray(m[0]).reshape(D, H), np.asarray(m[1]).reshape(1, H)])
    vW_a = np.vstack([np.asarray(v[0]).reshape(D, H), np.asarray(v[1]).reshape(1, H)])
    inp_a = np.zeros((R2, DA))
    inp_a[:, D] = 1.0
    h_a = np.empty((R2, H))
    ga_a = np.empty((R2, H))
    T_a = np.empty(R2)
    g_a = np.empty(R2)
    gW_a = np.empty((DA, H))
    gw2_a = np.empty(H)
    gb2_a = np.empty(1)
    cdef double[:, ::1] W = W_a
    cdef double[:, ::1] mW = mW_a
    cdef double[:, ::1] vW = vW_a
    cdef double[:, ::1] inp = inp_a
    cdef double[:, ::1] h = h_a
    cdef double[:, ::1] ga = ga_a
    cdef double[::1] T = T_a
    cdef double[::1] g = g_a
    cdef double[:, ::1] gW = gW_a
    cdef double[::1] gw2 = gw2_a
    cdef double[::1] gb2 = gb2_a
    cdef double[::1] mw2 = np.asarray(m[2]).reshape(-1), mb2 = np.asarray(m[3]).reshape(-1)
    cdef double[::1] vw2 = np.asarray(v[2]).reshape(-1), vb2 = np.asarray(v[3]).reshape(-1)

    with nogil:
        for t in range(n_steps):
            # rows [0, b): joint pairs; [b, 2b): same features, re-paired labels
            for r in range(R2):
                if r < b:
                    row = joint[t, r]
                    lab = y[row]
                else:
                    row = joint[t, r - b]
                    lab = y[marg[t, r - b]]
                for j in range(d):
                    inp[r, j] = X[row, j]
                for j in range(d, D):
                    inp[r, j] = 0.0
                inp[r, d + lab] = 1.0

            _gemm_rm(&inp[0, 0], &W[0, 0], &h[0, 0], <int>R2, <int>DA, <int>H, False)
            fsnid_relu(&h[0, 0], R2 * H)
            _gemv_rm(&h[0, 0], &w2[0], &T[0], <int>R2, <int>H, False)

            mean_j = 0.0
            for r in range(b):
                T[r] += b2[0]
                mean_j += T[r]
            mean_j /= b
            for r in range(b, R2):
                T[r] += b2[0]
            mx = T[b]
            for r in range(b + 1, R2):
                if T[r] > mx:
                    mx = T[r]
            s = 0.0
            for r in range(b, R2):
                g[r] = exp(T[r] - mx)
                s += g[r]
            trace[t] = mean_j - (log(s / b) + mx)
            if not isfinite(trace[t]):
                done = t
                break

            # d(-bound)/dT
            gsum = 0.0
            for r in range(b):
                g[r] = -1.0 / b
                gsum += g[r]
            for r in range(b, R2):
                g[r] = g[r] / s
                gsum += g[r]
            gb2[0] = gsum
            _gemv_rm(&h[0, 0], &g[0], &gw2[0], <int>R2, <int>H, True)
            for r in range(R2):
                fsnid_relu_grad(&h[r, 0], &ga[r, 0], &w2[0], g[r], H)
            _gemm_rm(&inp[0, 0], &ga[0, 0], &gW[0, 0], <int>DA, <int>R2, <int>H, True)

            step += 1
            c1 = 1.0 - pow(beta1, step)
            c2 = 1.0 - pow(beta2, step)
            fsnid_adam(&W[0, 0], &gW[0, 0], &mW[0, 0], &vW[0, 0], DA * H,
                       lr, beta1, beta2, eps, c1, c2)
            fsnid_adam(&w2[0], &gw2[0], &mw2[0], &vw2[0], H, lr, beta1, beta2, eps, c1, c2)
            fsnid_adam(&b2[0], &gb2[0], &mb2[0], &vb2[0], 1, lr, beta1, beta2, eps, c1, c2)

    np.asarray(w1)[...] = W_a[:D]
    np.asarray(b1)[...] = W_a[D]
    np.asarray(m[0]).reshape(D, H)[...] = mW_a[:D]
    np.asarray(m[1])[...] = mW_a[D]
    np.asarray(v[0]).reshape(D, H)[...] = vW_a[:D]
    np.asarray(v[1])[...] = vW_a[D]
    return done


def recurrent_dv_train(const double[:, ::1] X, const Py_ssize_t[::1] y,
                       const Py_ssize_t[:, :, ::1] joint, const Py_ssize_t[:, :, ::1] marg,
                       double[:, ::1] wx, double[:, ::1] wh, double[::1] bias,
                       double[::1] w_out, double[::1] b_out,
                       list m, list v, long step0,
                       double lr, double beta1, double beta2, double eps,
                       double[::1] trace):
    """Recurrent counterpart of :func:`dense_dv_train`.

    ``joint``/``marg`` are ``(steps, b, s)`` row windows.  Moments in ``m``/``v``
    follow the field order (wx, wh, b, w_out, b_out).  Matrix products go to
    BLAS and the gate nonlinearities to numpy's vectorised ``tanh``; the gate
    arithmetic and the backward cell recurrences are fused C loops.
    """
    cdef Py_ssize_t n_steps = joint.shape[0]
    cdef Py_ssize_t b = joint.shape[1]
    cdef Py_ssize_t S = joint.shape[2]
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t D = wx.shape[0]
    cdef Py_ssize_t H = wh.shape[0]
    cdef Py_ssize_t G = 4 * H
    cdef Py_ssize_t DA = D + 1
    cdef Py_ssize_t R2 = 2 * b
    cdef Py_ssize_t it, t, r, j, row, lab
    cdef double mx, s, mean_j, c1, c2, gsum
    cdef long step = step0
    cdef Py_ssize_t done = n_steps

    W_a = np.vstack([np.asarray(wx), np.asarray(bias)[None, :]])
    mW_a = np.vstack([np.asarray(m[0]).reshape(D, G), np.asarray(m[2]).reshape(1, G)])
    vW_a = np.vstack([np.asarray(v[0]).reshape(D, G), np.asarray(v[2]).reshape(1, G)])
    inp_a = np.zeros((S, R2, DA))
    inp_a[:, :, D] = 1.0
    Z_a = np.empty((S, R2, G))      # pre-activations, then gate activations
    C_a = np.zeros((S + 1, R2, H))  # cell states, C[0] = 0
    Hs_a = np.zeros((S + 1, R2, H))  # hidden states, Hs[0] = 0
    TC_a = np.empty((S, R2, H))
    DZ_a = np.empty((S, R2, G))
    Z_views = [Z_a[i] for i in range(S)]
    C_views = [C_a[i + 1] for i in range(S)]
    TC_views = [TC_a[i] for i in range(S)]
    dh_a = np.empty((R2, H))
    dc_a = np.empty((R2, H))
    T_a = np.empty(R2)
    g_a = np.empty(R2)
    gW_a = np.empty((DA, G))
    gwh_a = np.empty((H, G))
    gwo_a = np.empty(H)
    gbo_a = np.empty(1)
    cdef double[:, ::1] W = W_a
    cdef double[:, ::1] mW = mW_a
    cdef double[:, ::1] vW = vW_a
    cdef double[:, :, ::1] inp = inp_a
    cdef double[:, :, ::1] Z = Z_a
    cdef double[:, :, ::1] C = C_a
    cdef double[:, :, ::1] Hs = Hs_a
    cdef double[:, :, ::1] TC = TC_a
    cdef double[:, :, ::1] DZ = DZ_a
    cdef double[:, ::1] dh = dh_a
    cdef double[:, ::1] dc = dc_a
    cdef double[::1] T = T_a
    cdef double[::1] g = g_a
    cdef double[:, ::1] gW = gW_a
    cdef double[:, ::1] gwh = gwh_a
    cdef double[::1] gwo = gwo_a
    cdef double[::1] gbo = gbo_a
    cdef double[::1] mwh = np.asarray(m[1]).reshape(-1), vwh = np.asarray(v[1]).reshape(-1)
    cdef double[::1] mwo = np.asarray(m[3]).reshape(-1), vwo = np.asarray(v[3]).reshape(-1)
    cdef double[::1] mbo = np.asarray(m[4]).reshape(-1), vbo = np.asarray(v[4]).reshape(-1)

    for it in range(n_steps):
        with nogil:
            # time-major input: inp[t, r] for window r at offset t
            for t in range(S):
                for r in range(R2):
                    if r < b:
                        row = joint[it, r, t]
                        lab = y[row]
                    else:
                        row = joint[it, r - b, t]
                        lab = y[marg[it, r - b, t]]
                    for j in range(d):
                        inp[t, r, j] = X[row, j]
                    for j in range(d, D):
                        inp[t, r, j] = 0.0
                    inp[t, r, d + lab] = 1.0
            _gemm(b'N', b'N', <int>(S * R2), <int>G, <int>DA, &inp[0, 0, 0], &W[0, 0],
                  0.0, &Z[0, 0, 0])

        for t in range(S):
            with nogil:
                if t > 0:
                    _gemm(b'N', b'N', <int>R2, <int>G, <int>H, &Hs[t, 0, 0], &wh[0, 0],
                          1.0, &Z[t, 0, 0])
                fsnid_lstm_prescale(&Z[t, 0, 0], R2, H)
            np.tanh(Z_views[t], out=Z_views[t])
            with nogil:
                fsnid_lstm_gates(&Z[t, 0, 0], &C[t, 0, 0], &C[t + 1, 0, 0], R2, H)
            np.tanh(C_views[t], out=TC_views[t])
            with nogil:
                fsnid_lstm_hidden(&Z[t, 0, 0], &TC[t, 0, 0], &Hs[t + 1, 0, 0], R2, H)

        with nogil:
            _gemv_rm(&Hs[S, 0, 0], &w_out[0], &T[0], <int>R2, <int>H, False)
            mean_j = 0.0
            for r in range(b):
                T[r] += b_out[0]
                mean_j += T[r]
            mean_j /= b
            for r in range(b, R2):
                T[r] += b_out[0]
            mx = T[b]
            for r in range(b + 1, R2):
                if T[r] > mx:
                    mx = T[r]
            s = 0.0
            for r in range(b, R2):
                g[r] = exp(T[r] - mx)
                s += g[r]
            trace[it] = mean_j - (log(s / b) + mx)
        if not isfinite(trace[it]):
            done = it
            break

        with nogil:
            gsum = 0.0
            for r in range(b):
                g[r] = -1.0 / b
                gsum += g[r]
            for r in range(b, R2):
                g[r] = g[r] / s
                gsum += g[r]
            gbo[0] = gsum
            _gemv_rm(&Hs[S, 0, 0], &g[0], &gwo[0], <int>R2, <int>H, True)
            for r in range(R2):
                for j in range(H):
                    dh[r, j] = g[r] * w_out[j]
                    dc[r, j] = 0.0
            for t in range(S - 1, -1, -1):
                fsnid_lstm_cell_grad(&Z[t, 0, 0], &TC[t, 0, 0], &C[t, 0, 0], &dh[0, 0],
                                     &dc[0, 0], &DZ[t, 0, 0], R2, H)
                if t > 0:
                    _gemm(b'N', b'T', <int>R2, <int>H, <int>G, &DZ[t, 0, 0], &wh[0, 0],
                          0.0, &dh[0, 0])
            # Hs[0] is zero, so stacking Hs[0:S] gives sum_t h_{t-1}^T dz_t
            _gemm(b'T', b'N', <int>H, <int>G, <int>(S * R2), &Hs[0, 0, 0], &DZ[0, 0, 0],
                  0.0, &gwh[0, 0])
            _gemm(b'T', b'N', <int>DA, <int>G, <int>(S * R2), &inp[0, 0, 0], &DZ[0, 0, 0],
                  0.0, &gW[0, 0])

            step += 1
            c1 = 1.0 - pow(beta1, step)
            c2 = 1.0 - pow(beta2, step)
            fsnid_adam(&W[0, 0], &gW[0, 0], &mW[0, 0], &vW[0, 0], DA * G,
                       lr, beta1, beta2, eps, c1, c2)
            fsnid_adam(&wh[0, 0], &gwh[0, 0], &mwh[0], &vwh[0], H * G,
                       lr, beta1, beta2, eps, c1, c2)
            fsnid_adam(&w_out[0], &gwo[0], &mwo[0], &vwo[0], H, lr, beta1, beta2, eps, c1, c2)
            fsnid_adam(&b_out[0], &gbo[0], &mbo[0], &vbo[0], 1, lr, beta1, beta2, eps, c1, c2)

    np.asarray(wx)[...] = W_a[:D]
    np.asarray(bias)[...] = W_a[D]
    np.asarray(m[0]).reshape(D, G)[...] = mW_a[:D]
    np.asarray(m[2])[...] = mW_a[D]
    np.asarray(v[0]).reshape(D, G)[...] = vW_a[:D]
    np.asarray(v[2])[...] = vW_a[D]
    return done
