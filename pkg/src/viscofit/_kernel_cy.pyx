# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel for the convex branch of the potential network.

Mirrors the contract of _kernel_numpy (conv_forward / conv_dual /
conv_backward, shared cache layout).  Matrix products go through BLAS dgemm;
the activation/adjoint elementwise work is fused in C loops, which removes
the temporaries the NumPy kernel allocates.  Summation order differs from
NumPy's pairwise sums, so cross-backend agreement is to rounding, not
bitwise; the parity tests pin this down.
"""

import numpy as np

from libc.math cimport exp, fabs, log1p
from scipy.linalg.cython_blas cimport dgemm


cdef extern from *:
    pass

BACKEND = "cython"


cdef inline double _sp(double x) noexcept nogil:
    return (x if x > 0.0 else 0.0) + log1p(exp(-fabs(x)))


cdef inline double _sig(double x) noexcept nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef void _matmul_nt(double[:, ::1] out, double[:, ::1] X, double[:, ::1] W,
                     double alpha, double beta) noexcept nogil:
    """out [n,m] = alpha * X [n,k] @ W.T [k,m] + beta * out (row-major).

    Row-major A@B^T maps onto column-major dgemm as
    out^T = alpha * W^T_colmajor^T ... handled by swapping operands:
    out_cm (m x n) = W_cm(k x m)^T @ X_cm(k x n).
    """
    cdef int n = <int> X.shape[0]
    cdef int k = <int> X.shape[1]
    cdef int m = <int> W.shape[0]
    if n == 0 or m == 0 or k == 0:
        return
    # column-major view: X_cm is (k x n) with lda=k, W_cm is (k x m) lda=k,
    # out_cm is (m x n) with lda=m.  out_cm = alpha * W_cm^T @ X_cm.
    dgemm("T", "N", &m, &n, &k, &alpha, &W[0, 0], &k, &X[0, 0], &k,
          &beta, &out[0, 0], &m)


cdef void _matmul_tn(double[:, ::1] out, double[:, ::1] X, double[:, ::1] Y,
                     double alpha, double beta) noexcept nogil:
    """out [m,k] = alpha * X.T [m,n] @ Y [n,k] + beta * out (row-major)."""
    cdef int n = <int> X.shape[0]
    cdef int m = <int> X.shape[1]
    cdef int k = <int> Y.shape[1]
    if n == 0 or m == 0 or k == 0:
        return
    # out_cm (k x m) = Y_cm (k x n) @ X_cm (m x n)^T
    dgemm("N", "T", &k, &m, &n, &alpha, &Y[0, 0], &k, &X[0, 0], &m,
          &beta, &out[0, 0], &k)


cdef void _matmul_nn(double[:, ::1] out, double[:, ::1] X, double[:, ::1] W,
                     double alpha, double beta) noexcept nogil:
    """out [n,m] = alpha * X [n,k] @ W [k,m] + beta * out (row-major)."""
    cdef int n = <int> X.shape[0]
    cdef int k = <int> X.shape[1]
    cdef int m = <int> W.shape[1]
    if n == 0 or m == 0 or k == 0:
        return
    # out_cm (m x n) = W_cm (m x k) @ X_cm (k x n)
    dgemm("N", "N", &m, &n, &k, &alpha, &W[0, 0], &m, &X[0, 0], &k,
          &beta, &out[0, 0], &m)


cdef void _fill_rows(double[:, ::1] out, double[::1] row) noexcept nogil:
    cdef Py_ssize_t n = out.shape[0], w = out.shape[1]
    cdef Py_ssize_t t, j
    for t in range(n):
        for j in range(w):
            out[t, j] = row[j]


cdef void _softplus_inplace(double[:, ::1] pre, double[:, ::1] x) noexcept nogil:
    cdef Py_ssize_t n = pre.shape[0], w = pre.shape[1]
    cdef Py_ssize_t t, j
    for t in range(n):
        for j in range(w):
            x[t, j] = _sp(pre[t, j])


cdef void _dual_activation(double[:, ::1] pre, double[:, ::1] dpre,
                           double[:, ::1] x, double[:, ::1] dx) noexcept nogil:
    cdef Py_ssize_t n = pre.shape[0], w = pre.shape[1]
    cdef Py_ssize_t t, j
    cdef double p
    for t in range(n):
        for j in range(w):
            p = pre[t, j]
            x[t, j] = _sp(p)
            dx[t, j] = _sig(p) * dpre[t, j]


cdef void _layer_adjoint(double[:, ::1] pre, double[:, ::1] dpre,
                         double[:, ::1] xbar, double[:, ::1] dxbar,
                         double[:, ::1] prebar, double[:, ::1] dprebar,
                         double[::1] colsum, bint use_h) noexcept nogil:
    cdef Py_ssize_t n = pre.shape[0], w = pre.shape[1]
    cdef Py_ssize_t t, j
    cdef double s, pb, acc
    for j in range(w):
        colsum[j] = 0.0
    for t in range(n):
        for j in range(w):
            s = _sig(pre[t, j])
            pb = s * xbar[t, j]
            if use_h:
                pb += s * (1.0 - s) * dpre[t, j] * dxbar[t, j]
                dprebar[t, j] = s * dxbar[t, j]
            prebar[t, j] = pb
            colsum[j] += pb


def _bc(B, C):
    return np.ascontiguousarray(np.asarray(B) @ np.asarray(C))


def conv_forward(A, B, U, wx, wc, wI, I, Cs, Cout):
    I = np.ascontiguousarray(I)
    cdef Py_ssize_t H = len(A)
    n = I.shape[0]
    pres, xs = [], []
    x = None
    for h in range(H):
        w = A[h].shape[0]
        pre = np.empty((n, w))
        _fill_rows(pre, _bc(B[h], Cs[h]))
        _matmul_nt(pre, I, A[h], 1.0, 1.0)
        if h > 0:
            _matmul_nt(pre, x, U[h - 1], 1.0, 1.0)
        xh = np.empty((n, w))
        _softplus_inplace(pre, xh)
        pres.append(pre)
        xs.append(xh)
        x = xh
    psi = xs[H - 1] @ wx + float(np.dot(wc, Cout)) + I @ wI
    return psi, (pres, xs, None, None)


def conv_dual(A, B, U, wx, wc, wI, I, Idot, Cs, Cout):
    I = np.ascontiguousarray(I)
    Idot = np.ascontiguousarray(Idot)
    cdef Py_ssize_t H = len(A)
    n = I.shape[0]
    pres, xs, dpres, dxs = [], [], [], []
    x = dx = None
    for h in range(H):
        w = A[h].shape[0]
        pre = np.empty((n, w))
        dpre = np.empty((n, w))
        _fill_rows(pre, _bc(B[h], Cs[h]))
        _matmul_nt(pre, I, A[h], 1.0, 1.0)
        _matmul_nt(dpre, Idot, A[h], 1.0, 0.0)
        if h > 0:
            _matmul_nt(pre, x, U[h - 1], 1.0, 1.0)
            _matmul_nt(dpre, dx, U[h - 1], 1.0, 1.0)
        xh = np.empty((n, w))
        dxh = np.empty((n, w))
        _dual_activation(pre, dpre, xh, dxh)
        pres.append(pre)
        xs.append(xh)
        dpres.append(dpre)
        dxs.append(dxh)
        x = xh
        dx = dxh
    psi = xs[H - 1] @ wx + float(np.dot(wc, Cout)) + I @ wI
    hval = dxs[H - 1] @ wx + Idot @ wI
    return psi, hval, (pres, xs, dpres, dxs)


def conv_backward(A, B, U, wx, wc, wI, I, Idot, Cs, Cout, cache,
                  psi_bar=None, h_bar=None, need_input_grad=False):
    pres, xs, dpres, dxs = cache
    cdef Py_ssize_t H = len(A)
    I = np.ascontiguousarray(I)
    n = I.shape[0]
    use_psi = psi_bar is not None
    use_h = h_bar is not None
    if use_h and dpres is None:
        raise ValueError("h-seeded backward needs a conv_dual cache")
    Idot_c = np.ascontiguousarray(Idot) if Idot is not None else np.zeros((n, 2))

    gA = [np.zeros_like(np.asarray(A[h])) for h in range(H)]
    gB = [np.zeros_like(np.asarray(B[h])) for h in range(H)]
    gU = [np.zeros_like(np.asarray(U[h])) for h in range(H - 1)]
    gC = [np.zeros_like(np.asarray(Cs[h])) for h in range(H)]
    gwx = np.zeros_like(np.asarray(wx))
    gwc = np.zeros_like(np.asarray(wc))
    gwI = np.zeros_like(np.asarray(wI))
    gI = np.zeros((n, 2)) if need_input_grad else None

    wH = np.asarray(wx).shape[0]
    xbar = np.zeros((n, wH))
    dxbar = np.zeros((n, wH))
    empty = np.zeros((1, 1))
    if use_psi:
        psi_bar = np.asarray(psi_bar, dtype=float)
        xbar += psi_bar[:, None] * np.asarray(wx)[None, :]
        gwx += xs[H - 1].T @ psi_bar
        gwc += float(np.sum(psi_bar)) * np.asarray(Cout)
        gwI += I.T @ psi_bar
        if need_input_grad:
            gI += psi_bar[:, None] * np.asarray(wI)[None, :]
    if use_h:
        h_bar = np.asarray(h_bar, dtype=float)
        dxbar += h_bar[:, None] * np.asarray(wx)[None, :]
        gwx += dxs[H - 1].T @ h_bar
        gwI += Idot_c.T @ h_bar
    gCout = (float(np.sum(psi_bar)) * np.asarray(wc)) if use_psi \
        else np.zeros_like(np.asarray(wc))

    for h in range(H - 1, -1, -1):
        w = np.asarray(A[h]).shape[0]
        prebar = np.empty((n, w))
        dprebar = np.empty((n, w)) if use_h else empty
        colsum = np.empty(w)
        _layer_adjoint(pres[h], dpres[h] if use_h else empty,
                       xbar, dxbar, prebar, dprebar, colsum, use_h)
        _matmul_tn(gA[h], prebar, I, 1.0, 1.0)
        if use_h:
            _matmul_tn(gA[h], dprebar, Idot_c, 1.0, 1.0)
        if h > 0:
            _matmul_tn(gU[h - 1], prebar, xs[h - 1], 1.0, 1.0)
            wprev = np.asarray(A[h - 1]).shape[0]
            xbar_new = np.empty((n, wprev))
            _matmul_nn(xbar_new, prebar, U[h - 1], 1.0, 0.0)
            if use_h:
                _matmul_tn(gU[h - 1], dprebar, dxs[h - 1], 1.0, 1.0)
                dxbar_new = np.empty((n, wprev))
                _matmul_nn(dxbar_new, dprebar, U[h - 1], 1.0, 0.0)
                dxbar = dxbar_new
            xbar = xbar_new
        if need_input_grad:
            gI += np.asarray(prebar) @ np.asarray(A[h])
        gB[h] += np.outer(colsum, np.asarray(Cs[h]))
        gC[h] += np.asarray(B[h]).T @ colsum

    return {
        "A": gA, "B": gB, "U": gU, "wx": gwx, "wc": gwc, "wI": gwI,
        "C": gC, "Cout": gCout, "I": gI,
    }
