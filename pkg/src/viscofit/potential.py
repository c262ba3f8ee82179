"""Partially input-convex potential network with smoothed L0 gates.

The scalar potential psi(I1, I2, c) is convex and non-decreasing in the two
invariant inputs while depending arbitrarily (non-convexly) on the
composition scalar c.  Structure:

  non-convex trunk   y_1 = sp(V_1 c),  y_k = sp(V_k y_{k-1})
  coupling features  C_h   = g(P_h y_{min(h,K)})   for convex layer h
                     C_out = g(P_out y_K)
  convex trunk       x_1 = sp(A_1 I + B_1 C_1)
                     x_h = sp(A_h I + U_h x_{h-1} + B_h C_h)
  output             psi = wx . x_H + wc . C_out + wI . I

with sp = softplus and g the coupling transform (softplus by default, raw
linear behind the ``coupling="linear"`` switch).  There are no biases
anywhere.  Convexity in (I1, I2) requires U_h >= 0 and the x-columns of the
output map >= 0; additionally every input map A_h with h >= 2, the layer >= 2
couplings B_h and the full output row are constrained non-negative.

Every weight matrix is gated for L0 sparsification: the effective weight is
theta_bar * z where z in [0, 1] is a hard-concrete gate driven by a
per-weight location parameter log_alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._kernels import kernel
from ._kernel_numpy import sigmoid, softplus
from .errors import ConfigError, DomainError

INVARIANT_DIM = 2


@dataclass
class L0Hyper:
    """Hard-concrete gate hyperparameters."""

    gamma_gate: float = -0.1
    zeta: float = 1.1
    beta: float = 2.0 / 3.0
    log_alpha_init_std: float = 0.01
    mc_samples: int = 1

    def __post_init__(self):
        if not (self.gamma_gate < 0.0 < self.zeta):
            raise ConfigError("gate stretch must satisfy gamma < 0 < zeta")
        if not (0.0 < self.beta <= 1.0):
            raise ConfigError("gate temperature beta must be in (0, 1]")
        if self.mc_samples < 1:
            raise ConfigError("mc_samples must be a positive integer")


@dataclass
class GatedMatrix:
    """One weight matrix with per-entry hard-concrete gate parameters."""

    name: str
    theta_bar: np.ndarray
    log_alpha: np.ndarray
    nonneg: bool
    group: str  # "fc" | "nc" | "ncfc"

    def __post_init__(self):
        if self.theta_bar.shape != self.log_alpha.shape:
            raise ConfigError(
                f"{self.name}: theta_bar and log_alpha shapes differ"
            )

    @property
    def size(self) -> int:
        return self.theta_bar.size


class ActiveCounts(NamedTuple):
    fc: int
    nc: int
    ncfc: int


class PicnnModel:
    """Gated weight storage plus the architecture wiring.

    ``conv_widths`` are the convex hidden-layer widths, ``nc_widths`` the
    non-convex trunk widths.  Coupling feature width equals the width of the
    trunk layer it is drawn from.
    """

    def __init__(
        self,
        conv_widths: tuple[int, ...] = (30, 30),
        nc_widths: tuple[int, ...] = (5, 5),
        coupling: str = "softplus",
        hyper: L0Hyper | None = None,
    ):
        if len(conv_widths) < 1 or len(nc_widths) < 1:
            raise ConfigError("need at least one convex and one trunk layer")
        if len(conv_widths) > 4 or len(nc_widths) > 4:
            raise ConfigError("architectures beyond 4 layers are unsupported")
        if coupling not in ("softplus", "linear"):
            raise ConfigError(f"unknown coupling transform {coupling!r}")
        self.conv_widths = tuple(int(w) for w in conv_widths)
        self.nc_widths = tuple(int(v) for v in nc_widths)
        self.coupling = coupling
        self.hyper = hyper or L0Hyper()
        self.matrices: list[GatedMatrix] = []
        self._by_name: dict[str, GatedMatrix] = {}
        self._build()

    # -- construction -----------------------------------------------------

    def _add(self, name, shape, nonneg, group):
        m = GatedMatrix(
            name=name,
            theta_bar=np.zeros(shape),
            log_alpha=np.zeros(shape),
            nonneg=nonneg,
            group=group,
        )
        self.matrices.append(m)
        self._by_name[name] = m

    def _build(self):
        K = len(self.nc_widths)
        H = len(self.conv_widths)
        prev = 1
        for k, v in enumerate(self.nc_widths):
            self._add(f"nc_{k}", (v, prev), nonneg=False, group="nc")
            prev = v
        for h in range(1, H + 1):
            src = self.nc_widths[min(h, K) - 1]
            self._add(f"couple_{h}", (src, src), nonneg=False, group="ncfc")
        self._add(
            "couple_out",
            (self.nc_widths[-1], self.nc_widths[-1]),
            nonneg=False,
            group="ncfc",
        )
        for h in range(1, H + 1):
            w = self.conv_widths[h - 1]
            src = self.nc_widths[min(h, K) - 1]
            self._add(f"inv_{h}", (w, INVARIANT_DIM), nonneg=h >= 2, group="fc")
            self._add(f"inj_{h}", (w, src), nonneg=h >= 2, group="fc")
            if h >= 2:
                wprev = self.conv_widths[h - 2]
                if wprev != self.conv_widths[h - 2]:
                    raise ConfigError("inconsistent hidden widths")
                self._add(f"hid_{h}", (w, wprev), nonneg=True, group="fc")
        out_dim = self.conv_widths[-1] + self.nc_widths[-1] + INVARIANT_DIM
        self._add("out", (1, out_dim), nonneg=True, group="fc")

    # -- basic accessors ---------------------------------------------------

    def __getitem__(self, name: str) -> GatedMatrix:
        return self._by_name[name]

    @property
    def n_conv_layers(self) -> int:
        return len(self.conv_widths)

    @property
    def n_nc_layers(self) -> int:
        return len(self.nc_widths)

    def n_parameters(self) -> int:
        return sum(m.size for m in self.matrices)

    def group_sizes(self) -> dict[str, int]:
        sizes = {"fc": 0, "nc": 0, "ncfc": 0}
        for m in self.matrices:
            sizes[m.group] += m.size
        return sizes

    def initialize(self, seed: int = 0) -> "PicnnModel":
        """Seeded init: constrained weights U[0, 0.1], unconstrained
        U[-0.1, 0.1]; gate locations N(0, log_alpha_init_std)."""
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        for m in self.matrices:
            if m.nonneg:
                m.theta_bar[...] = rng.uniform(0.0, 0.1, size=m.theta_bar.shape)
            else:
                m.theta_bar[...] = rng.uniform(-0.1, 0.1, size=m.theta_bar.shape)
            m.log_alpha[...] = rng.normal(
                0.0, self.hyper.log_alpha_init_std, size=m.log_alpha.shape
            )
        return self

    def copy(self) -> "PicnnModel":
        other = PicnnModel(self.conv_widths, self.nc_widths, self.coupling, self.hyper)
        for m, o in zip(self.matrices, other.matrices):
            o.theta_bar[...] = m.theta_bar
            o.log_alpha[...] = m.log_alpha
        return other

    # -- flattening (parameter order: all theta_bar row-major in matrix
    #    order, then all log_alpha in the same order) ----------------------

    def flatten(self) -> np.ndarray:
        parts = [m.theta_bar.ravel() for m in self.matrices]
        parts += [m.log_alpha.ravel() for m in self.matrices]
        return np.concatenate(parts)

    def unflatten(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=float)
        if vec.size != 2 * self.n_parameters():
            raise ConfigError("flat vector length mismatch")
        k = 0
        for m in self.matrices:
            m.theta_bar[...] = vec[k : k + m.size].reshape(m.theta_bar.shape)
            k += m.size
        for m in self.matrices:
            m.log_alpha[...] = vec[k : k + m.size].reshape(m.log_alpha.shape)
            k += m.size


# -- gates -----------------------------------------------------------------

GateRealization = dict  # name -> z array, same shape as the matrix


def sample_gate_noise(model: PicnnModel, rng: np.random.Generator) -> dict:
    """One uniform draw per gated parameter, strictly inside (0, 1)."""
    u = {}
    for m in model.matrices:
        raw = rng.random(m.theta_bar.shape)
        # nextafter keeps the draw strictly inside the open interval
        u[m.name] = np.clip(raw, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    return u


def _stretch_clamp(s: np.ndarray, hyper: L0Hyper) -> np.ndarray:
    sbar = s * (hyper.zeta - hyper.gamma_gate) + hyper.gamma_gate
    return np.clip(sbar, 0.0, 1.0)


def sample_gates(model: PicnnModel, noise: dict) -> GateRealization:
    """Stochastic hard-concrete gates from uniform noise u in (0, 1).

    s = sig((log u - log(1-u) + log_alpha)/beta), stretched by (zeta, gamma)
    and clamped to [0, 1].
    """
    hyper = model.hyper
    z = {}
    for m in model.matrices:
        u = np.asarray(noise[m.name], dtype=float)
        if u.shape != m.theta_bar.shape:
            raise ConfigError(f"noise shape mismatch for {m.name}")
        if np.any(u <= 0.0) or np.any(u >= 1.0):
            raise DomainError("gate noise must lie strictly inside (0, 1)")
        s = sigmoid((np.log(u) - np.log1p(-u) + m.log_alpha) / hyper.beta)
        z[m.name] = _stretch_clamp(s, hyper)
    return z


def gate_noise_derivative(model: PicnnModel, noise: dict) -> dict:
    """dz/d(log_alpha) for a sampled realization (zero on the clamped set)."""
    hyper = model.hyper
    span = hyper.zeta - hyper.gamma_gate
    dz = {}
    for m in model.matrices:
        u = np.asarray(noise[m.name], dtype=float)
        s = sigmoid((np.log(u) - np.log1p(-u) + m.log_alpha) / hyper.beta)
        sbar = s * span + hyper.gamma_gate
        inside = (sbar > 0.0) & (sbar < 1.0)
        dz[m.name] = np.where(inside, span * s * (1.0 - s) / hyper.beta, 0.0)
    return dz


def sample_gates_with_derivative(model: PicnnModel, noise: dict):
    """(z, dz/dlog_alpha) in one sweep; semantics of sample_gates plus
    gate_noise_derivative without recomputing the concrete variable."""
    hyper = model.hyper
    span = hyper.zeta - hyper.gamma_gate
    z, dz = {}, {}
    for m in model.matrices:
        u = noise[m.name]
        s = sigmoid((np.log(u) - np.log1p(-u) + m.log_alpha) / hyper.beta)
        sbar = s * span + hyper.gamma_gate
        z[m.name] = np.clip(sbar, 0.0, 1.0)
        inside = (sbar > 0.0) & (sbar < 1.0)
        dz[m.name] = np.where(inside, span * s * (1.0 - s) / hyper.beta, 0.0)
    return z, dz


def inference_gates(model: PicnnModel) -> GateRealization:
    """Deterministic gates z_hat = clamp(sig(log_alpha)(zeta-gamma)+gamma)."""
    return {
        m.name: _stretch_clamp(sigmoid(m.log_alpha), model.hyper)
        for m in model.matrices
    }


def deterministic_gates_with_derivative(model: PicnnModel):
    """(z_hat, dz_hat/dlog_alpha) for the deterministic gates."""
    hyper = model.hyper
    span = hyper.zeta - hyper.gamma_gate
    z, dz = {}, {}
    for m in model.matrices:
        s = sigmoid(m.log_alpha)
        sbar = s * span + hyper.gamma_gate
        z[m.name] = np.clip(sbar, 0.0, 1.0)
        inside = (sbar > 0.0) & (sbar < 1.0)
        dz[m.name] = np.where(inside, span * s * (1.0 - s), 0.0)
    return z, dz


def open_gates(model: PicnnModel) -> GateRealization:
    """All gates fully open (z = 1); useful for analytic embeddings."""
    return {m.name: np.ones_like(m.theta_bar) for m in model.matrices}


def expected_l0_penalty(model: PicnnModel) -> float:
    """Expected number of open gates: sum_j sig(log_alpha_j - beta log(-gamma/zeta))."""
    return float(sum(expected_l0_by_group(model).values()))


def expected_l0_by_group(model: PicnnModel) -> dict[str, float]:
    hyper = model.hyper
    shift = hyper.beta * math.log(-hyper.gamma_gate / hyper.zeta)
    out = {"fc": 0.0, "nc": 0.0, "ncfc": 0.0}
    for m in model.matrices:
        out[m.group] += float(np.sum(sigmoid(m.log_alpha - shift)))
    return out


def project_nonnegative(model: PicnnModel) -> None:
    """Clamp constrained matrices to theta_bar >= 0 (post-optimizer step)."""
    for m in model.matrices:
        if m.nonneg:
            np.maximum(m.theta_bar, 0.0, out=m.theta_bar)


def count_active_parameters(model: PicnnModel) -> ActiveCounts:
    """Counts of parameters with a strictly positive inference gate."""
    z = inference_gates(model)
    counts = {"fc": 0, "nc": 0, "ncfc": 0}
    for m in model.matrices:
        counts[m.group] += int(np.count_nonzero(z[m.name] > 0.0))
    return ActiveCounts(**counts)


# -- evaluation ------------------------------------------------------------


def effective_weights(model: PicnnModel, gates: GateRealization) -> dict:
    return {m.name: m.theta_bar * gates[m.name] for m in model.matrices}


def _coupling_fn(model):
    if model.coupling == "softplus":
        return softplus, sigmoid
    return (lambda q: q), (lambda q: np.ones_like(q))


def nc_forward(model: PicnnModel, weights: dict, c: float):
    """Non-convex trunk and coupling features for one composition value.

    Returns (ys, Cs, Cout, cache).
    """
    g, _ = _coupling_fn(model)
    K = model.n_nc_layers
    H = model.n_conv_layers
    ys, pres = [], []
    inp = np.array([float(c)])
    for k in range(K):
        p = weights[f"nc_{k}"] @ inp
        y = softplus(p)
        pres.append(p)
        ys.append(y)
        inp = y
    qs, Cs = [], []
    for h in range(1, H + 1):
        q = weights[f"couple_{h}"] @ ys[min(h, K) - 1]
        qs.append(q)
        Cs.append(g(q))
    qout = weights["couple_out"] @ ys[-1]
    Cout = g(qout)
    return ys, Cs, Cout, (pres, ys, qs, qout)


def nc_backward(model, weights, c, cache, gC, gCout):
    """Adjoint of nc_forward; returns gradients for nc_* and couple_*."""
    _, dg = _coupling_fn(model)
    pres, ys, qs, qout = cache
    K = model.n_nc_layers
    H = model.n_conv_layers
    grads = {}
    ybars = [np.zeros_like(y) for y in ys]

    qbar = dg(qout) * gCout
    grads["couple_out"] = np.outer(qbar, ys[-1])
    ybars[-1] += weights["couple_out"].T @ qbar
    for h in range(H, 0, -1):
        src = min(h, K) - 1
        qbar = dg(qs[h - 1]) * gC[h - 1]
        grads[f"couple_{h}"] = np.outer(qbar, ys[src])
        ybars[src] += weights[f"couple_{h}"].T @ qbar
    for k in range(K - 1, -1, -1):
        pbar = sigmoid(pres[k]) * ybars[k]
        inp = ys[k - 1] if k > 0 else np.array([float(c)])
        grads[f"nc_{k}"] = np.outer(pbar, inp)
        if k > 0:
            ybars[k - 1] += weights[f"nc_{k}"].T @ pbar
    return grads


def _conv_weight_views(model: PicnnModel, weights: dict):
    H = model.n_conv_layers
    A = [weights[f"inv_{h}"] for h in range(1, H + 1)]
    B = [weights[f"inj_{h}"] for h in range(1, H + 1)]
    U = [weights[f"hid_{h}"] for h in range(2, H + 1)]
    out = weights["out"][0]
    wH = model.conv_widths[-1]
    vK = model.nc_widths[-1]
    wx = out[:wH]
    wc = out[wH : wH + vK]
    wI = out[wH + vK :]
    return A, B, U, wx, wc, wI


def _as_points(i1, i2):
    i1 = np.atleast_1d(np.asarray(i1, dtype=float))
    i2 = np.atleast_1d(np.asarray(i2, dtype=float))
    if i1.shape != i2.shape:
        raise ConfigError("i1 and i2 must have matching shapes")
    return np.column_stack([i1, i2])


def forward_energy(i1, i2, c, model: PicnnModel, gates: GateRealization):
    """Raw (unnormalized) potential at the given invariants and composition."""
    weights = effective_weights(model, gates)
    _, Cs, Cout, _ = nc_forward(model, weights, c)
    A, B, U, wx, wc, wI = _conv_weight_views(model, weights)
    I = _as_points(i1, i2)
    psi, _ = kernel().conv_forward(A, B, U, wx, wc, wI, I, Cs, Cout)
    return float(psi[0]) if np.isscalar(i1) or np.ndim(i1) == 0 else psi


def normalized_energy(i1, i2, c, model: PicnnModel, gates: GateRealization):
    """Potential shifted so the undeformed state (3, 3) has zero energy.

    Both evaluations share the same gate realization.
    """
    raw = forward_energy(i1, i2, c, model, gates)
    ref = forward_energy(3.0, 3.0, c, model, gates)
    return raw - ref


@dataclass
class EnergyEval:
    """Normalized energy, invariant derivatives and the parameter gradient
    of the normalized energy (flattened in model parameter order)."""

    psi: float
    dpsi_di1: float
    dpsi_di2: float
    param_gradients: np.ndarray = field(repr=False, default=None)


def energy_derivs_batch(I: np.ndarray, c: float, model: PicnnModel,
                        gates: GateRealization):
    """(dpsi/dI1, dpsi/dI2) for a batch of invariant pairs, via two
    forward-tangent sweeps with unit directions."""
    weights = effective_weights(model, gates)
    _, Cs, Cout, _ = nc_forward(model, weights, c)
    A, B, U, wx, wc, wI = _conv_weight_views(model, weights)
    n = I.shape[0]
    e1 = np.tile(np.array([1.0, 0.0]), (n, 1))
    e2 = np.tile(np.array([0.0, 1.0]), (n, 1))
    k = kernel()
    _, d1, _ = k.conv_dual(A, B, U, wx, wc, wI, I, e1, Cs, Cout)
    _, d2, _ = k.conv_dual(A, B, U, wx, wc, wI, I, e2, Cs, Cout)
    return d1, d2


def effective_grad_map(model, conv_grads, nc_grads) -> dict:
    """Gradients with respect to effective weights, keyed by matrix name."""
    H = model.n_conv_layers
    eff = {}
    for h in range(1, H + 1):
        eff[f"inv_{h}"] = conv_grads["A"][h - 1]
        eff[f"inj_{h}"] = conv_grads["B"][h - 1]
        if h >= 2:
            eff[f"hid_{h}"] = conv_grads["U"][h - 2]
    eff["out"] = np.concatenate(
        [conv_grads["wx"], conv_grads["wc"], conv_grads["wI"]]
    )[None, :]
    eff.update(nc_grads)
    return eff


def _param_grad_vector(model, conv_grads, nc_grads, gates, noise=None):
    """Assemble the flat (theta_bar, log_alpha) gradient from gradients with
    respect to the effective weights."""
    eff = effective_grad_map(model, conv_grads, nc_grads)

    if noise is None:
        dz = None
    else:
        dz = gate_noise_derivative(model, noise)
    theta_parts, alpha_parts = [], []
    for m in model.matrices:
        g_eff = eff[m.name]
        z = gates[m.name]
        theta_parts.append((g_eff * z).ravel())
        if dz is not None:
            alpha_parts.append((g_eff * m.theta_bar * dz[m.name]).ravel())
        else:
            # deterministic or fully-open gates carry no noise path; the
            # clamped regions have zero derivative anyway
            alpha_parts.append(np.zeros(m.size))
    return np.concatenate(theta_parts + alpha_parts)


def energy_gradients(i1, i2, c, model: PicnnModel, gates: GateRealization,
                     noise: dict | None = None) -> EnergyEval:
    """Exact derivatives of the normalized energy.

    ``dpsi_di1``/``dpsi_di2`` come from the reverse sweep of the same forward
    recursion used for evaluation.  ``param_gradients`` covers every
    theta_bar entry followed by every log_alpha entry; log_alpha gradients
    require the sampling ``noise`` that produced the gates (they are zero for
    deterministic gates, whose clamp has zero slope almost everywhere).
    """
    weights = effective_weights(model, gates)
    _, Cs, Cout, nc_cache = nc_forward(model, weights, c)
    A, B, U, wx, wc, wI = _conv_weight_views(model, weights)
    k = kernel()
    I = _as_points(i1, i2)
    I0 = _as_points(3.0, 3.0)
    one = np.ones(1)

    psi, cache = k.conv_forward(A, B, U, wx, wc, wI, I, Cs, Cout)
    psi0, cache0 = k.conv_forward(A, B, U, wx, wc, wI, I0, Cs, Cout)
    g = k.conv_backward(A, B, U, wx, wc, wI, I, None, Cs, Cout, cache,
                        psi_bar=one, need_input_grad=True)
    g0 = k.conv_backward(A, B, U, wx, wc, wI, I0, None, Cs, Cout, cache0,
                         psi_bar=one, need_input_grad=False)

    conv_grads = {
        "A": [a - b for a, b in zip(g["A"], g0["A"])],
        "B": [a - b for a, b in zip(g["B"], g0["B"])],
        "U": [a - b for a, b in zip(g["U"], g0["U"])],
        "wx": g["wx"] - g0["wx"],
        "wc": g["wc"] - g0["wc"],
        "wI": g["wI"] - g0["wI"],
    }
    gC = [a - b for a, b in zip(g["C"], g0["C"])]
    gCout = g["Cout"] - g0["Cout"]
    nc_grads = nc_backward(model, weights, c, nc_cache, gC, gCout)
    flat = _param_grad_vector(model, conv_grads, nc_grads, gates, noise)
    return EnergyEval(
        psi=float(psi[0] - psi0[0]),
        dpsi_di1=float(g["I"][0, 0]),
        dpsi_di2=float(g["I"][0, 1]),
        param_gradients=flat,
    )
