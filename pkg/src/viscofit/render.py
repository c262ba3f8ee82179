"""Render a sparsified potential network as closed-form text.

Surviving gated terms become nested softplus/log/exp expressions in I1, I2
and c.  Purely constant subtrees are folded to numbers (the normalization
subtracts the energy at the undeformed state, so constants are inert).
"""

from __future__ import annotations

import numpy as np

from ._kernel_numpy import softplus
from .potential import PicnnModel, effective_weights, inference_gates

_MAX_CHARS = 6000


class _Node:
    __slots__ = ("text", "const")

    def __init__(self, text: str, const: float | None):
        self.text = text
        self.const = const  # numeric value when the subtree is constant


def _num(x: float) -> str:
    return f"{x:.6g}"


def _lin(terms: list[tuple[float, _Node]]) -> _Node:
    """Linear combination sum_i w_i * node_i with constant folding."""
    const_acc = 0.0
    parts = []
    for w, node in terms:
        if w == 0.0:
            continue
        if node.const is not None:
            const_acc += w * node.const
        else:
            parts.append((w, node))
    if not parts:
        return _Node(_num(const_acc), const_acc)
    chunks = []
    for i, (w, node) in enumerate(parts):
        sign = "-" if w < 0 else ("" if i == 0 else "+")
        lead = "" if i == 0 or w < 0 else " "
        mag = abs(w)
        coef = "" if mag == 1.0 else f"{_num(mag)}*"
        chunks.append(f"{lead}{sign} {coef}{node.text}".strip())
    if const_acc != 0.0:
        chunks.append(f"+ {_num(const_acc)}" if const_acc > 0
                      else f"- {_num(-const_acc)}")
    return _Node(" ".join(chunks), None)


def _sp(node: _Node) -> _Node:
    if node.const is not None:
        val = float(softplus(np.array([node.const]))[0])
        return _Node(_num(val), val)
    return _Node(f"log(exp({node.text}) + 1)", None)


def render_expression(model: PicnnModel) -> str:
    weights = effective_weights(model, inference_gates(model))
    K = model.n_nc_layers
    H = model.n_conv_layers
    c_node = _Node("c", None)
    ys: list[list[_Node]] = []
    prev = [c_node]
    for k in range(K):
        V = weights[f"nc_{k}"]
        layer = [_sp(_lin([(V[j, i], prev[i]) for i in range(len(prev))]))
                 for j in range(V.shape[0])]
        ys.append(layer)
        prev = layer

    def couple(name, src):
        P = weights[name]
        raw = [_lin([(P[j, i], src[i]) for i in range(len(src))])
               for j in range(P.shape[0])]
        if model.coupling == "softplus":
            return [_sp(r) for r in raw]
        return raw

    i1 = _Node("I1", None)
    i2 = _Node("I2", None)
    xs: list[_Node] = []
    for h in range(1, H + 1):
        A = weights[f"inv_{h}"]
        B = weights[f"inj_{h}"]
        C = couple(f"couple_{h}", ys[min(h, K) - 1])
        layer = []
        for j in range(A.shape[0]):
            terms = [(A[j, 0], i1), (A[j, 1], i2)]
            terms += [(B[j, i], C[i]) for i in range(len(C))]
            if h >= 2:
                U = weights[f"hid_{h}"]
                terms += [(U[j, i], xs[i]) for i in range(len(xs))]
            layer.append(_sp(_lin(terms)))
        xs = layer

    Cout = couple("couple_out", ys[-1])
    out = weights["out"][0]
    wH = model.conv_widths[-1]
    vK = model.nc_widths[-1]
    terms = [(out[i], xs[i]) for i in range(wH)]
    terms += [(out[wH + i], Cout[i]) for i in range(vK)]
    terms += [(out[wH + vK], i1), (out[wH + vK + 1], i2)]
    psi = _lin(terms)
    body = psi.text
    if len(body) > _MAX_CHARS:
        return ("model too dense to render as a closed form "
                f"({len(body)} characters); sparsify first")
    return (f"psi(I1, I2, c) = {body}\n"
            "(reported energies subtract psi(3, 3, c) so the undeformed "
            "state has zero energy)")
