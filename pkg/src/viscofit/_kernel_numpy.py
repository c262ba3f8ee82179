"""NumPy kernel for the convex branch of the potential network.

The convex branch is evaluated for a batch of invariant pairs at once.  Three
entry points share one forward recursion:

  conv_forward   values psi only
  conv_dual      values plus the directional derivative h = dpsi/dI . Idot,
                 propagated with forward-mode tangents
  conv_backward  reverse sweep over the cached forward; accepts adjoint seeds
                 on psi and/or on h and accumulates weight gradients

Weight layout (H convex layers of widths w_1..w_H, invariant input dim 2,
coupling feature vectors C_1..C_H and C_out):

  pre_1 = I A_1^T + B_1 C_1
  pre_h = I A_h^T + x_{h-1} U_h^T + B_h C_h        (h >= 2)
  x_h   = softplus(pre_h)
  psi   = x_H . wx + C_out . wc + I . wI

All arrays are float64.  The Cython twin in _kernel_cy.pyx implements the
same contract; see _kernels.py for backend selection.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def conv_forward(A, B, U, wx, wc, wI, I, Cs, Cout):
    """Forward pass. Returns (psi (n,), cache)."""
    H = len(A)
    pres, xs = [], []
    x = None
    for h in range(H):
        pre = I @ A[h].T + (B[h] @ Cs[h])[None, :]
        if h > 0:
            pre = pre + x @ U[h - 1].T
        x = softplus(pre)
        pres.append(pre)
        xs.append(x)
    psi = xs[-1] @ wx + float(wc @ Cout) + I @ wI
    return psi, (pres, xs, None, None)


def conv_dual(A, B, U, wx, wc, wI, I, Idot, Cs, Cout):
    """Forward pass with tangents in the invariant inputs.

    Returns (psi (n,), h (n,), cache) where h = dpsi/dI1*Idot1 + dpsi/dI2*Idot2
    pointwise.  The coupling features carry zero tangent (they do not depend
    on the invariants).
    """
    H = len(A)
    pres, xs, dpres, dxs = [], [], [], []
    x = dx = None
    for h in range(H):
        pre = I @ A[h].T + (B[h] @ Cs[h])[None, :]
        dpre = Idot @ A[h].T
        if h > 0:
            pre = pre + x @ U[h - 1].T
            dpre = dpre + dx @ U[h - 1].T
        x = softplus(pre)
        dx = sigmoid(pre) * dpre
        pres.append(pre)
        xs.append(x)
        dpres.append(dpre)
        dxs.append(dx)
    psi = xs[-1] @ wx + float(wc @ Cout) + I @ wI
    hval = dxs[-1] @ wx + Idot @ wI
    return psi, hval, (pres, xs, dpres, dxs)


def conv_backward(
    A, B, U, wx, wc, wI, I, Idot, Cs, Cout, cache,
    psi_bar=None, h_bar=None, need_input_grad=False,
):
    """Reverse sweep.

    Accumulates d/dW of  sum_t [psi_bar_t * psi_t + h_bar_t * h_t].  A cache
    from conv_dual is required whenever h_bar is given; a conv_forward cache
    suffices for a psi-only seed.

    Returns a dict with gА/gB/gU lists, gwx, gwc, gwI, gC (list), gCout and,
    when requested, gI (n,2) = per-point dpsi/dI weighted by psi_bar.
    """
    pres, xs, dpres, dxs = cache
    H = len(A)
    n = I.shape[0]
    use_psi = psi_bar is not None
    use_h = h_bar is not None
    if use_h and dpres is None:
        raise ValueError("h-seeded backward needs a conv_dual cache")

    gA = [np.zeros_like(A[h]) for h in range(H)]
    gB = [np.zeros_like(B[h]) for h in range(H)]
    gU = [np.zeros_like(U[h]) for h in range(H - 1)]
    gC = [np.zeros_like(Cs[h]) for h in range(H)]
    gwx = np.zeros_like(wx)
    gwc = np.zeros_like(wc)
    gwI = np.zeros_like(wI)
    gI = np.zeros((n, 2)) if need_input_grad else None

    xbar = np.zeros((n, wx.shape[0]))
    dxbar = np.zeros_like(xbar)
    if use_psi:
        xbar += psi_bar[:, None] * wx[None, :]
        gwx += xs[-1].T @ psi_bar
        sbar = float(np.sum(psi_bar))
        gwc += sbar * Cout
        gwI += I.T @ psi_bar
        if need_input_grad:
            gI += psi_bar[:, None] * wI[None, :]
    if use_h:
        dxbar += h_bar[:, None] * wx[None, :]
        gwx += dxs[-1].T @ h_bar
        gwI += Idot.T @ h_bar
    gCout = (float(np.sum(psi_bar)) * wc) if use_psi else np.zeros_like(wc)

    for h in range(H - 1, -1, -1):
        sig = sigmoid(pres[h])
        prebar = sig * xbar
        if use_h:
            sigp = sig * (1.0 - sig)
            prebar = prebar + sigp * dpres[h] * dxbar
            dprebar = sig * dxbar
        gA[h] += prebar.T @ I
        if use_h:
            gA[h] += dprebar.T @ Idot
        colsum = prebar.sum(axis=0)
        gB[h] += np.outer(colsum, Cs[h])
        gC[h] += B[h].T @ colsum
        if need_input_grad:
            gI += prebar @ A[h]
        if h > 0:
            gU[h - 1] += prebar.T @ xs[h - 1]
            if use_h:
                gU[h - 1] += dprebar.T @ dxs[h - 1]
            xbar = prebar @ U[h - 1]
            if use_h:
                dxbar = dprebar @ U[h - 1]
        # h == 0: invariant and coupling inputs terminate the recursion

    return {
        "A": gA, "B": gB, "U": gU, "wx": gwx, "wc": gwc, "wI": gwI,
        "C": gC, "Cout": gCout, "I": gI,
    }
