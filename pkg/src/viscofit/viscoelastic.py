"""Quasi-linear viscoelastic time integration.

The relaxed stress follows from the instantaneous elastic history through an
exponential relaxation kernel:

    sigma(t) = sigma_e(t) - (gamma/tau) * int_0^t exp(-(t-s)/tau) sigma_e(s) ds

The relaxation coefficient gamma in [0, 1] is composition-dependent (a small
MLP maps c to gamma); the relaxation time tau is fixed at 10 s, since gamma
and tau only enter through their ratio and the data cannot identify both.

A literal "multiplier" reading, sigma(t) = sigma_e(t) * (1 - gamma *
(1 - exp(-t/tau))), is retained behind ``form="multiplier"``; the convolution
form is the default and the only one exercised by the acceptance suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernel_numpy import sigmoid, softplus
from .errors import ConfigError, DomainError

QLV_FORMS = ("convolution", "multiplier")


@dataclass(frozen=True)
class QlvKernel:
    """Exponential relaxation kernel parameters."""

    gamma: float
    tau: float = 10.0

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise DomainError(f"relaxation coefficient must be in [0,1], got {self.gamma}")
        if not (self.tau > 0.0):
            raise DomainError(f"relaxation time must be positive, got {self.tau}")


@dataclass
class StressHistory:
    """A sampled scalar history (stress in MPa or torque in N*mm)."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise DomainError("times and values must be matching 1-d arrays")
        if self.times.size and self.times[0] != 0.0:
            raise DomainError("history must start at t = 0")
        if np.any(np.diff(self.times) <= 0.0):
            raise DomainError("times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("history values must be finite")


@dataclass
class GammaMlp:
    """One-hidden-layer map from composition to the relaxation coefficient.

    softplus hidden activation, sigmoid output, no biases; the sigmoid keeps
    gamma strictly inside (0, 1).
    """

    w_hidden: np.ndarray  # (hidden,) weights on the scalar input
    w_out: np.ndarray     # (hidden,) output weights

    def __post_init__(self):
        self.w_hidden = np.asarray(self.w_hidden, dtype=float).ravel()
        self.w_out = np.asarray(self.w_out, dtype=float).ravel()
        if self.w_hidden.shape != self.w_out.shape:
            raise ConfigError("hidden and output weight lengths differ")

    @classmethod
    def initialize(cls, hidden: int = 8, seed: int = 0,
                   scale: float = 0.5) -> "GammaMlp":
        # weights of order one let the hidden softplus features separate
        # nearby compositions early; tiny weights leave the map near-constant
        # and slow to differentiate
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        return cls(
            w_hidden=rng.uniform(-scale, scale, hidden),
            w_out=rng.uniform(-scale, scale, hidden),
        )


def gamma_of_composition(c, mlp: GammaMlp):
    """gamma_hat = sigmoid(w_out . softplus(w_hidden * c)), in (0, 1)."""
    c = np.asarray(c, dtype=float)
    hidden = softplus(np.multiply.outer(c, mlp.w_hidden))
    return sigmoid(hidden @ mlp.w_out)


def gamma_mlp_gradients(c: float, mlp: GammaMlp):
    """(gamma, dgamma/dw_hidden, dgamma/dw_out) at a scalar composition."""
    pre = mlp.w_hidden * c
    hid = softplus(pre)
    g = float(sigmoid(np.array([hid @ mlp.w_out]))[0])
    gp = g * (1.0 - g)
    d_out = gp * hid
    d_hid = gp * mlp.w_out * sigmoid(pre) * c
    return g, d_hid, d_out


@dataclass
class QlvModel:
    """Relaxation kernel plus the composition-to-gamma map.

    ``fixed_gamma`` overrides the MLP when set (handy for analytic checks).
    """

    gamma_mlp: GammaMlp | None = None
    fixed_gamma: float | None = None
    tau: float = 10.0
    form: str = "convolution"

    def __post_init__(self):
        if self.form not in QLV_FORMS:
            raise ConfigError(f"unknown qlv form {self.form!r}")
        if self.gamma_mlp is None and self.fixed_gamma is None:
            raise ConfigError("need either a gamma MLP or a fixed gamma")

    def gamma(self, c: float) -> float:
        if self.fixed_gamma is not None:
            return float(self.fixed_gamma)
        return float(gamma_of_composition(float(c), self.gamma_mlp))

    def kernel_for(self, c: float) -> QlvKernel:
        return QlvKernel(gamma=self.gamma(c), tau=self.tau)


def qlv_convolve(
    history: StressHistory, kernel: QlvKernel, form: str = "convolution"
) -> StressHistory:
    """Relaxed history on the same time grid.

    Convolution form uses the O(1)-per-step exponential recursion

        Itg_{k+1} = exp(-dt/tau) Itg_k
                    + (dt/2) (exp(-dt/tau) v_k + v_{k+1})
        out_k = v_k - (gamma/tau) Itg_k

    which is trapezoidal quadrature of the kernel integral; non-uniform time
    grids are supported through the per-interval dt.
    """
    if form not in QLV_FORMS:
        raise ConfigError(f"unknown qlv form {form!r}")
    t, v = history.times, history.values
    if form == "multiplier":
        out = v * (1.0 - kernel.gamma * (1.0 - np.exp(-t / kernel.tau)))
        return StressHistory(t.copy(), out)
    if kernel.gamma == 0.0:
        return StressHistory(t.copy(), v.copy())
    tau = kernel.tau
    itg = np.empty_like(v)
    itg[0] = 0.0
    acc = 0.0
    for k in range(t.size - 1):
        dt = t[k + 1] - t[k]
        decay = np.exp(-dt / tau)
        acc = decay * acc + 0.5 * dt * (decay * v[k] + v[k + 1])
        itg[k + 1] = acc
    return StressHistory(t.copy(), v - (kernel.gamma / tau) * itg)


def qlv_convolve_brute(history: StressHistory, kernel: QlvKernel) -> StressHistory:
    """O(n^2) trapezoidal evaluation of the convolution integral.

    Test oracle for the recursive update; kept independent of it.
    """
    t, v = history.times, history.values
    out = np.empty_like(v)
    for k in range(t.size):
        integrand = np.exp(-(t[k] - t[: k + 1]) / kernel.tau) * v[: k + 1]
        out[k] = v[k] - (kernel.gamma / kernel.tau) * np.trapezoid(
            integrand, t[: k + 1]
        )
    return StressHistory(t.copy(), out)


def relaxation_matrix(times: np.ndarray, tau: float) -> np.ndarray:
    """Matrix A with (A v)_k = (1/tau) * trapezoid of exp(-(t_k-s)/tau) v(s).

    The relaxed history is then v - gamma * A v.  A encodes exactly the same
    trapezoidal quadrature as the recursion in qlv_convolve, which makes the
    adjoint (A^T) available for gradient propagation in training.
    """
    t = np.asarray(times, dtype=float)
    n = t.size
    if n == 0:
        return np.zeros((0, 0))
    dt = np.diff(t)
    if np.any(dt <= 0.0):
        raise DomainError("times must be strictly increasing")
    w = np.zeros(n)
    A = np.zeros((n, n))
    for k in range(1, n):
        # trapezoid weights over [t_0, t_k]
        w[: k + 1] = 0.0
        w[0] = 0.5 * dt[0]
        if k > 1:
            w[1:k] = 0.5 * (dt[: k - 1] + dt[1:k])
        w[k] = 0.5 * dt[k - 1]
        A[k, : k + 1] = np.exp(-(t[k] - t[: k + 1]) / tau) * w[: k + 1]
    return A / tau
