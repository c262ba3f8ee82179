"""Analytic reference material and synthetic data generation.

A fixed closed-form strain-energy function psi(I1, I2, c) and relaxation map
gamma(c), used as ground truth: they generate synthetic tension/torsion data
and serve as the recovery target for the training pipeline.  The energy is a
sparse instance of the gated potential network (see reference_picnn), so the
two evaluation routes cross-check each other.

All exp/log products are evaluated in log space (softplus chains): at the
largest composition the product term's natural-log exponent exceeds 130, so
naive exponentiation is numerically off limits.
"""

from __future__ import annotations

import numpy as np

from ._kernel_numpy import sigmoid, softplus
from .dataio import ExperimentRecord
from .errors import DomainError
from .kinematics import TorsionGeometry
from .loading import (
    LoadingProtocol,
    simulate_tension,
    simulate_torsion,
)
from .potential import L0Hyper, PicnnModel
from .viscoelastic import GammaMlp, QlvModel

# -- published constants (frozen; the checksum test guards against edits) ---

PRODUCT_RATES = (6.84602, 6.86996, 6.88268, 6.93876)
PRODUCT_POWERS = (2.37126, 2.1961, 2.56167, 1.9888)

ENERGY_CONSTANTS = {
    "lin_i1": 0.083089,
    "w_big": 4.01198,
    "u": (-0.207897, 0.135303, -0.021823),
    "v": (0.228289, -0.204157, 0.049792),
    "arg": (0.033506, 1.16891, 0.733048),
    "w_small": 0.809351,
    "small_i1": 0.009634,
}

GAMMA_DECAY = (1.381, 1.018, 0.976, 0.296)
GAMMA_DECAY_POWERS = (0.423, 0.446, 0.552, 0.492)
GAMMA_GROW_NUM = (0.059, 0.111)
GAMMA_GROW_NUM_POWERS = (0.054, 0.147)
GAMMA_GROW_DEN = (0.754, 1.295)
GAMMA_GROW_DEN_POWERS = (0.254, 0.264)

# composition scale: 0 at the softest blend, 1 at DM-60, beyond 1 for DM-70
COMPOSITIONS = {
    "A": 0.0,
    "DM-40": 0.1755,
    "DM-50": 0.4669,
    "DM-60": 1.0,
    "DM-70": 2.0895,
}
TRAIN_COMPOSITIONS = ("A", "DM-50", "DM-60")
HOLDOUT_ROLES = {"DM-40": "test-interpolation", "DM-70": "test-extrapolation"}

TENSION_RATES = (0.09, 0.009, 0.0009)  # 1/s
TORSION_RATES = (360.0,)  # deg/min
DEFAULT_GEOMETRY = TorsionGeometry(length=57.0, radius=5.0)


def _log_product_term(c):
    """log(prod_k (exp(a_k c) + 1)^{b_k} + 1), computed as nested softplus."""
    c = np.asarray(c, dtype=float)
    a = np.array(PRODUCT_RATES)
    b = np.array(PRODUCT_POWERS)
    inner = softplus(np.multiply.outer(c, a)) @ b  # log prod (e^{a c}+1)^b
    return softplus(inner)


def psi_reference(i1, i2, c):
    """The closed-form energy, MPa (unnormalized)."""
    i1 = np.asarray(i1, dtype=float)
    i2 = np.asarray(i2, dtype=float)
    if np.any(i1 < 3.0 - 1e-9) or np.any(i2 < 3.0 - 1e-9):
        raise DomainError("invariants must be >= 3")
    if np.any(np.asarray(c, dtype=float) < 0.0):
        raise DomainError("composition must be non-negative")
    E = ENERGY_CONSTANTS
    lq = _log_product_term(c)
    u = E["u"][0] * i1 + E["u"][1] * i2 + E["u"][2] * lq
    v = E["v"][0] * i1 + E["v"][1] * i2 + E["v"][2] * lq
    arg = E["arg"][0] * i1 + E["arg"][1] * softplus(u) + E["arg"][2] * softplus(v)
    return (
        E["lin_i1"] * i1
        + E["w_big"] * softplus(arg)
        + E["w_small"] * softplus(E["small_i1"] * i1)
    )


def psi_reference_normalized(i1, i2, c):
    """Energy shifted to vanish at the undeformed state (3, 3)."""
    return psi_reference(i1, i2, c) - psi_reference(3.0, 3.0, c)


def reference_energy_derivs(i1, i2, c):
    """(dpsi/dI1, dpsi/dI2) of the closed form, by hand-chained sigmoids."""
    i1 = np.asarray(i1, dtype=float)
    i2 = np.asarray(i2, dtype=float)
    E = ENERGY_CONSTANTS
    lq = _log_product_term(c)
    u = E["u"][0] * i1 + E["u"][1] * i2 + E["u"][2] * lq
    v = E["v"][0] * i1 + E["v"][1] * i2 + E["v"][2] * lq
    arg = E["arg"][0] * i1 + E["arg"][1] * softplus(u) + E["arg"][2] * softplus(v)
    s_arg = sigmoid(arg)
    s_u = sigmoid(u)
    s_v = sigmoid(v)
    d1 = (
        E["lin_i1"]
        + E["w_big"] * s_arg * (E["arg"][0] + E["arg"][1] * s_u * E["u"][0]
                                + E["arg"][2] * s_v * E["v"][0])
        + E["w_small"] * sigmoid(E["small_i1"] * i1) * E["small_i1"]
    )
    d2 = E["w_big"] * s_arg * (E["arg"][1] * s_u * E["u"][1]
                               + E["arg"][2] * s_v * E["v"][1])
    return d1, d2


class ReferenceMaterial:
    """Material-protocol adapter around the closed-form energy."""

    def energy_derivs(self, i1, i2, c):
        return reference_energy_derivs(i1, i2, c)


def gamma_reference(c):
    """Relaxation coefficient gamma_hat(c) = 1 / (p1 p2 / q1 + 1).

    Evaluated as a sigmoid of the log of the ratio; always in (0, 1).
    """
    c = np.asarray(c, dtype=float)
    if np.any(c < 0.0):
        raise DomainError("composition must be non-negative")
    log_ratio = np.zeros_like(c)
    for k, w in zip(GAMMA_DECAY, GAMMA_DECAY_POWERS):
        log_ratio = log_ratio + w * softplus(-k * c)
    for k, w in zip(GAMMA_GROW_NUM, GAMMA_GROW_NUM_POWERS):
        log_ratio = log_ratio + w * softplus(k * c)
    for k, w in zip(GAMMA_GROW_DEN, GAMMA_GROW_DEN_POWERS):
        log_ratio = log_ratio - w * softplus(k * c)
    return sigmoid(-log_ratio)


def reference_gamma_mlp() -> GammaMlp:
    """The gamma map expressed as the one-hidden-layer MLP it is."""
    hidden = np.array(
        [-k for k in GAMMA_DECAY] + list(GAMMA_GROW_NUM) + list(GAMMA_GROW_DEN)
    )
    out = np.array(
        [-w for w in GAMMA_DECAY_POWERS]
        + [-w for w in GAMMA_GROW_NUM_POWERS]
        + list(GAMMA_GROW_DEN_POWERS)
    )
    return GammaMlp(w_hidden=hidden, w_out=out)


def reference_qlv(tau: float = 10.0) -> QlvModel:
    return QlvModel(gamma_mlp=reference_gamma_mlp(), tau=tau)


def reference_picnn() -> PicnnModel:
    """The closed form loaded into the gated network at default sizes.

    Non-zero constants get fully open gates (log_alpha = +10 clamps the
    deterministic gate to exactly 1), everything else is hard-pruned
    (log_alpha = -10 clamps to 0).  Forward evaluation then reproduces
    psi_reference to machine precision.
    """
    E = ENERGY_CONSTANTS
    model = PicnnModel(conv_widths=(30, 30), nc_widths=(5, 5),
                       coupling="softplus", hyper=L0Hyper())
    for m in model.matrices:
        m.theta_bar[...] = 0.0
        m.log_alpha[...] = -10.0

    def put(name, idx, value):
        m = model[name]
        m.theta_bar[idx] = value
        m.log_alpha[idx] = 10.0

    for j, a in enumerate(PRODUCT_RATES):
        put("nc_0", (j, 0), a)
    for j, b in enumerate(PRODUCT_POWERS):
        put("couple_1", (0, j), b)
    put("inv_1", (0, 0), E["u"][0])
    put("inv_1", (0, 1), E["u"][1])
    put("inj_1", (0, 0), E["u"][2])
    put("inv_1", (1, 0), E["v"][0])
    put("inv_1", (1, 1), E["v"][1])
    put("inj_1", (1, 0), E["v"][2])
    put("inv_2", (0, 0), E["arg"][0])
    put("hid_2", (0, 0), E["arg"][1])
    put("hid_2", (0, 1), E["arg"][2])
    put("inv_2", (1, 0), E["small_i1"])
    put("out", (0, 0), E["w_big"])
    put("out", (0, 1), E["w_small"])
    wH = model.conv_widths[-1]
    vK = model.nc_widths[-1]
    put("out", (0, wH + vK), E["lin_i1"])  # direct I1 column
    return model


def _record_id(mode: str, name: str, rate: float) -> str:
    return f"{mode}_{name}_rate{rate:g}"


def synthesize_dataset(
    compositions=None,
    tension_rates=None,
    torsion_rates=None,
    noise_std: float = 0.0,
    seed: int = 0,
    n_samples: int = 200,
    lambda_max: float = 2.0,
    phi_max_deg: float = 360.0,
    geometry: TorsionGeometry = DEFAULT_GEOMETRY,
) -> list[ExperimentRecord]:
    """Simulate the reference material over the full protocol grid.

    One record per (composition, rate, mode).  Optional Gaussian noise is
    scaled by each curve's output range and never applied to the t = 0 sample
    (which is exactly zero by construction).  Deterministic for a given seed.
    """
    if noise_std < 0.0:
        raise DomainError("noise_std must be >= 0")
    compositions = list(compositions or COMPOSITIONS)
    tension_rates = list(tension_rates or TENSION_RATES)
    torsion_rates = list(torsion_rates or TORSION_RATES)
    material = ReferenceMaterial()
    qlv = reference_qlv()
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    records = []
    for name in compositions:
        c = COMPOSITIONS[name]
        role = HOLDOUT_ROLES.get(name, "train")
        for rate in tension_rates:
            duration = (lambda_max - 1.0) / rate
            proto = LoadingProtocol(
                mode="tension", rate=rate, duration=duration,
                time_step=duration / (n_samples - 1), composition=c,
            )
            curve = simulate_tension(proto, material, qlv)
            out = _maybe_noisy(curve.outputs, noise_std, rng)
            records.append(ExperimentRecord(
                id=_record_id("tension", name, rate), mode="tension",
                composition_name=name, c=c, rate=rate, rate_unit="1/s",
                times=curve.times, inputs=curve.inputs, outputs=out, role=role,
            ))
        for rate in torsion_rates:
            duration = phi_max_deg / (rate / 60.0)
            proto = LoadingProtocol(
                mode="torsion", rate=rate, duration=duration,
                time_step=duration / (n_samples - 1), composition=c,
                geometry=geometry,
            )
            curve = simulate_torsion(proto, material, qlv)
            out = _maybe_noisy(curve.outputs, noise_std, rng)
            records.append(ExperimentRecord(
                id=_record_id("torsion", name, rate), mode="torsion",
                composition_name=name, c=c, rate=rate, rate_unit="deg/min",
                geometry=(geometry.length, geometry.radius),
                times=curve.times, inputs=curve.inputs, outputs=out, role=role,
            ))
    return records


def _maybe_noisy(values, noise_std, rng):
    if noise_std == 0.0:
        return values.copy()
    scale = noise_std * (values.max() - values.min())
    noisy = values + rng.normal(0.0, scale, size=values.shape)
    noisy[0] = values[0]
    return noisy
