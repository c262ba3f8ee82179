"""Finite-strain kinematics for uniaxial tension and pure torsion.

Incompressibility (J = 1) is enforced analytically in both loading modes, so
the volumetric response never enters numerically.  Units are fixed
package-wide: lengths in mm, time in s, stress in MPa, torque in N*mm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# det(C) below this is treated as singular rather than regularized; silent
# regularization would corrupt finite-difference gradient checks.
_DET_FLOOR = 1e-14
_SYM_TOL = 1e-12


@dataclass(frozen=True)
class TensionState:
    """Uniaxial stretch state: ratio of deformed to initial length."""

    stretch: float
    time: float = 0.0

    def __post_init__(self):
        if not (self.stretch > 0.0) or not np.isfinite(self.stretch):
            raise DomainError(f"stretch must be positive, got {self.stretch}")


@dataclass(frozen=True)
class TorsionGeometry:
    """Solid circular rod: length and outer radius in mm."""

    length: float = 57.0
    radius: float = 5.0

    def __post_init__(self):
        if not (self.length > 0.0 and self.radius > 0.0):
            raise DomainError(
                f"rod geometry must be positive, got L={self.length}, R={self.radius}"
            )

    @property
    def polar_moment(self) -> float:
        """J_p = (pi/2) R^4 for a solid circular section, mm^4."""
        return 0.5 * np.pi * self.radius**4


@dataclass(frozen=True)
class IsochoricInvariants:
    """(I1_bar, I2_bar, J) of the volume-preserving part of C."""

    i1_bar: float
    i2_bar: float
    jacobian: float = 1.0


def _check_spd_symmetric(C: np.ndarray) -> None:
    C = np.asarray(C, dtype=float)
    if C.shape != (3, 3):
        raise DomainError(f"expected a 3x3 tensor, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise DomainError("tensor has non-finite entries")
    if np.max(np.abs(C - C.T)) > _SYM_TOL:
        raise DomainError("tensor is not symmetric")


def inv_symmetric_3x3(C: np.ndarray) -> np.ndarray:
    """Closed-form inverse via adjugate/determinant.

    Deterministic and branch-free, which keeps gradient checks exact.  Raises
    on determinants below the singularity floor instead of regularizing.
    """
    C = np.asarray(C, dtype=float)
    a, b, c = C[0]
    d, e, f = C[1]
    g, h, i = C[2]
    A = e * i - f * h
    B = -(d * i - f * g)
    Cc = d * h - e * g
    det = a * A + b * B + c * Cc
    if not np.isfinite(det) or abs(det) < _DET_FLOOR:
        raise DomainError(f"tensor is numerically singular (det={det!r})")
    adj = np.array(
        [
            [A, -(b * i - c * h), b * f - c * e],
            [B, a * i - c * g, -(a * f - c * d)],
            [Cc, -(a * h - b * g), a * e - b * d],
        ]
    )
    return adj / det


def tension_deformation_gradient(stretch: float) -> np.ndarray:
    """F = diag(lambda, lambda^-1/2, lambda^-1/2); isochoric by construction."""
    if not (stretch > 0.0):
        raise DomainError(f"stretch must be positive, got {stretch}")
    return np.diag([stretch, stretch**-0.5, stretch**-0.5])


def tension_cauchy_green(state: TensionState) -> np.ndarray:
    """C = diag(lambda^2, 1/lambda, 1/lambda); det C = 1 identically."""
    lam = state.stretch
    return np.diag([lam * lam, 1.0 / lam, 1.0 / lam])


def tension_invariants(state: TensionState) -> IsochoricInvariants:
    """I1 = lambda^2 + 2/lambda, I2 = 2 lambda + 1/lambda^2, J = 1."""
    lam = state.stretch
    return IsochoricInvariants(
        i1_bar=lam * lam + 2.0 / lam,
        i2_bar=2.0 * lam + 1.0 / (lam * lam),
        jacobian=1.0,
    )


def torsion_invariants(
    r: float, twist: float, geom: TorsionGeometry
) -> IsochoricInvariants:
    """Invariants at radius r of a rod twisted by `twist` radians.

    Both invariants equal 3 + (r*twist/L)^2; the deformation is isochoric.
    """
    if r < 0.0 or r > geom.radius:
        raise DomainError(
            f"radial position {r} outside rod [0, {geom.radius}]"
        )
    shear = r * twist / geom.length
    val = 3.0 + shear * shear
    return IsochoricInvariants(i1_bar=val, i2_bar=val, jacobian=1.0)


def isochoric_invariant_derivatives(C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """d(I1_bar)/dC and d(I2_bar)/dC for symmetric positive-definite C.

    With J = det(C)^(1/2):

        dI1b/dC = J^(-2/3) [1 - (1/3) tr(C) C^-1]
        dI2b/dC = I1b dI1b/dC - J^(-4/3) C + (1/3) J^(-4/3) tr(C^2) C^-1

    Both results are symmetric.
    """
    _check_spd_symmetric(C)
    C = np.asarray(C, dtype=float)
    Cinv = inv_symmetric_3x3(C)
    det = float(np.linalg.det(C))
    if det <= 0.0:
        raise DomainError(f"C must be positive definite, det={det}")
    J = np.sqrt(det)
    j23 = J ** (-2.0 / 3.0)
    j43 = j23 * j23
    trC = float(np.trace(C))
    trC2 = float(np.trace(C @ C))
    dI1 = j23 * (np.eye(3) - (trC / 3.0) * Cinv)
    i1b = j23 * trC
    dI2 = i1b * dI1 - j43 * C + (j43 * trC2 / 3.0) * Cinv
    # symmetrize away roundoff so downstream symmetry checks are exact
    dI1 = 0.5 * (dI1 + dI1.T)
    dI2 = 0.5 * (dI2 + dI2.T)
    return dI1, dI2


def isochoric_invariants_of(C: np.ndarray) -> IsochoricInvariants:
    """Invariants of an arbitrary symmetric positive-definite C."""
    _check_spd_symmetric(C)
    det = float(np.linalg.det(C))
    if det <= 0.0:
        raise DomainError(f"C must be positive definite, det={det}")
    J = np.sqrt(det)
    Cb = J ** (-2.0 / 3.0) * np.asarray(C, dtype=float)
    tr = float(np.trace(Cb))
    tr2 = float(np.trace(Cb @ Cb))
    return IsochoricInvariants(tr, 0.5 * (tr * tr - tr2), J)


def second_pk_deviatoric(
    C: np.ndarray, dpsi_di1: float, dpsi_di2: float
) -> np.ndarray:
    """Constraint-free part of the 2nd Piola-Kirchhoff stress.

    S' = 2 [dpsi/dI1b * dI1b/dC + dpsi/dI2b * dI2b/dC].
    """
    if not (np.isfinite(dpsi_di1) and np.isfinite(dpsi_di2)):
        raise DomainError("energy partials must be finite")
    dI1, dI2 = isochoric_invariant_derivatives(C)
    return 2.0 * (dpsi_di1 * dI1 + dpsi_di2 * dI2)


def push_forward(F: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Cauchy stress from a reference stress: sigma = J^-1 F S F^T."""
    F = np.asarray(F, dtype=float)
    S = np.asarray(S, dtype=float)
    detF = float(np.linalg.det(F))
    if detF <= 0.0:
        raise DomainError(f"deformation gradient must have det > 0, got {detF}")
    sig = (F @ S @ F.T) / detF
    if np.max(np.abs(S - S.T)) <= _SYM_TOL:
        sig = 0.5 * (sig + sig.T)
    return sig
