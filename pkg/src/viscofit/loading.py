"""Forward models: loading protocol -> measurable response.

Tension yields the axial Cauchy stress sigma_11(t) in MPa, torsion the axial
torque T(t) in N*mm (plus the normalized TL/J_p in MPa).  Both compose the
instantaneous hyperelastic response with the relaxation convolution; torque
may be convolved after the radial integration because the kernel is linear.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from . import kinematics as kin
from .errors import ConfigError, DomainError
from .potential import GateRealization, PicnnModel, energy_derivs_batch
from .viscoelastic import QlvModel, StressHistory, qlv_convolve

DEG2RAD = np.pi / 180.0


class Material(Protocol):
    """Anything exposing the energy derivatives (dpsi/dI1, dpsi/dI2)."""

    def energy_derivs(self, i1, i2, c): ...


@dataclass(frozen=True)
class NeoHookean:
    """psi = (mu/2)(I1 - 3); composition-independent stand-in."""

    mu: float = 1.0

    def energy_derivs(self, i1, i2, c):
        i1 = np.asarray(i1, dtype=float)
        return np.full_like(i1, 0.5 * self.mu), np.zeros_like(i1)


@dataclass(frozen=True)
class MooneyRivlin:
    """psi = c1 (I1 - 3) + c2 (I2 - 3)."""

    c1: float = 0.5
    c2: float = 0.0

    def energy_derivs(self, i1, i2, c):
        i1 = np.asarray(i1, dtype=float)
        return np.full_like(i1, self.c1), np.full_like(i1, self.c2)


@dataclass
class PicnnMaterial:
    """Potential network with a frozen gate realization."""

    model: PicnnModel
    gates: GateRealization

    def energy_derivs(self, i1, i2, c):
        i1 = np.atleast_1d(np.asarray(i1, dtype=float))
        i2 = np.atleast_1d(np.asarray(i2, dtype=float))
        I = np.column_stack([i1, i2])
        return energy_derivs_batch(I, float(c), self.model, self.gates)


@dataclass(frozen=True)
class LoadingProtocol:
    """One loading program.

    Tension: stretch ramps as lambda(t) = rate*t + 1 with rate in 1/s.
    Torsion: twist ramps as phi(t) = rate*t with rate in deg/min.
    """

    mode: str  # "tension" | "torsion"
    rate: float
    duration: float
    time_step: float
    composition: float = 0.0
    geometry: kin.TorsionGeometry | None = None

    def __post_init__(self):
        if self.mode not in ("tension", "torsion"):
            raise ConfigError(f"unknown loading mode {self.mode!r}")
        if self.rate <= 0 or self.duration <= 0 or self.time_step <= 0:
            raise DomainError("rate, duration and time_step must be positive")
        if self.mode == "torsion" and self.geometry is None:
            raise ConfigError("torsion protocol needs a rod geometry")

    def times(self) -> np.ndarray:
        n = int(round(self.duration / self.time_step)) + 1
        return np.linspace(0.0, self.duration, n)

    def stretches(self, times: np.ndarray) -> np.ndarray:
        return self.rate * times + 1.0

    def twists_rad(self, times: np.ndarray) -> np.ndarray:
        # rate is in deg/min
        return self.rate / 60.0 * DEG2RAD * times


@dataclass
class ResponseCurve:
    """Simulated measurable output on a time grid.

    inputs: stretch ratio (tension) or twist angle in degrees (torsion).
    outputs: sigma_11 in MPa or torque in N*mm.
    normalized_outputs: nominal stress sigma_11/lambda (tension) or TL/J_p in
    MPa (torsion).
    """

    times: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    normalized_outputs: np.ndarray
    mode: str = "tension"


def gauss_legendre(order: int, a: float, b: float):
    """Nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def tension_stress_instantaneous(lam: float, c: float, material: Material) -> float:
    """Axial Cauchy stress for incompressible uniaxial tension.

    Built through the full tensor chain: C -> invariant derivatives -> S' ->
    push-forward, with the pressure eliminated through sigma_22 = 0.
    """
    state = kin.TensionState(stretch=float(lam))
    C = kin.tension_cauchy_green(state)
    inv = kin.tension_invariants(state)
    p1, p2 = material.energy_derivs(inv.i1_bar, inv.i2_bar, c)
    S = kin.second_pk_deviatoric(C, float(np.asarray(p1).ravel()[0]),
                                 float(np.asarray(p2).ravel()[0]))
    F = kin.tension_deformation_gradient(state.stretch)
    sig = kin.push_forward(F, S)
    return float(sig[0, 0] - sig[1, 1])


def tension_stress_curve(lams: np.ndarray, c: float, material: Material) -> np.ndarray:
    """Vectorized closed form of the tensor chain:

        sigma_11 = 2 (lambda^2 - 1/lambda) (dpsi/dI1 + dpsi/dI2 / lambda)

    Identical to tension_stress_instantaneous (checked in tests); used where
    whole curves are needed.
    """
    lams = np.asarray(lams, dtype=float)
    if np.any(lams <= 0.0):
        raise DomainError("stretch must be positive")
    i1 = lams * lams + 2.0 / lams
    i2 = 2.0 * lams + 1.0 / (lams * lams)
    p1, p2 = material.energy_derivs(i1, i2, c)
    return 2.0 * (lams * lams - 1.0 / lams) * (p1 + p2 / lams)


def torsion_shear_stress(r: float, phi: float, geom: kin.TorsionGeometry,
                         c: float, material: Material) -> float:
    """sigma_ztheta at radius r for twist phi (radians)."""
    inv = kin.torsion_invariants(r, phi, geom)
    p1, p2 = material.energy_derivs(inv.i1_bar, inv.i2_bar, c)
    p1 = float(np.asarray(p1).ravel()[0])
    p2 = float(np.asarray(p2).ravel()[0])
    return 2.0 * (phi / geom.length) * r * (p1 + p2)


def torsion_torque_instantaneous(phi: float, geom: kin.TorsionGeometry,
                                 c: float, material: Material,
                                 order: int = 16) -> float:
    """Axial torque T = 2 pi int_0^R sigma_ztheta(r) r^2 dr by Gauss-Legendre
    quadrature; the integrand is smooth so a fixed low order is spectrally
    accurate."""
    if not np.isfinite(phi):
        raise DomainError("twist must be finite")
    r, w = gauss_legendre(order, 0.0, geom.radius)
    shear = r * phi / geom.length
    val = 3.0 + shear * shear
    p1, p2 = material.energy_derivs(val, val, c)
    sig = 2.0 * (phi / geom.length) * r * (p1 + p2)
    return float(2.0 * np.pi * np.sum(w * sig * r * r))


def torsion_torque_curve(phis: np.ndarray, geom: kin.TorsionGeometry, c: float,
                         material: Material, order: int = 16) -> np.ndarray:
    """Torque for a vector of twist angles (radians) in one batched call."""
    phis = np.asarray(phis, dtype=float)
    r, w = gauss_legendre(order, 0.0, geom.radius)
    shear = np.multiply.outer(phis, r) / geom.length  # (n_t, n_q)
    val = 3.0 + shear * shear
    p1, p2 = material.energy_derivs(val.ravel(), val.ravel(), c)
    p1 = p1.reshape(val.shape)
    p2 = p2.reshape(val.shape)
    sig = 2.0 * np.multiply.outer(phis / geom.length, r) * (p1 + p2)
    return 2.0 * np.pi * (sig * (r * r * w)[None, :]).sum(axis=1)


def simulate_tension(protocol: LoadingProtocol, material: Material,
                     qlv: QlvModel | None = None) -> ResponseCurve:
    """Instantaneous stress history on the protocol grid, then relaxation."""
    if protocol.mode != "tension":
        raise ConfigError("protocol mode must be tension")
    t = protocol.times()
    lams = protocol.stretches(t)
    inst = tension_stress_curve(lams, protocol.composition, material)
    out = inst
    if qlv is not None:
        kernel = qlv.kernel_for(protocol.composition)
        out = qlv_convolve(StressHistory(t, inst), kernel, form=qlv.form).values
    return ResponseCurve(
        times=t, inputs=lams, outputs=out,
        normalized_outputs=out / lams, mode="tension",
    )


def simulate_torsion(protocol: LoadingProtocol, material: Material,
                     qlv: QlvModel | None = None, order: int = 16) -> ResponseCurve:
    """Instantaneous torque history, then relaxation applied to the torque.

    Convolving the integrated torque equals integrating pointwise-convolved
    shear stress because the relaxation operator is linear.
    """
    if protocol.mode != "torsion":
        raise ConfigError("protocol mode must be torsion")
    t = protocol.times()
    phis = protocol.twists_rad(t)
    inst = torsion_torque_curve(phis, protocol.geometry, protocol.composition,
                                material, order=order)
    out = inst
    if qlv is not None:
        kernel = qlv.kernel_for(protocol.composition)
        out = qlv_convolve(StressHistory(t, inst), kernel, form=qlv.form).values
    jp = protocol.geometry.polar_moment
    return ResponseCurve(
        times=t, inputs=phis / DEG2RAD, outputs=out,
        normalized_outputs=out * protocol.geometry.length / jp, mode="torsion",
    )
