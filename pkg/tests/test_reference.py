import hashlib

import numpy as np
import pytest

from viscofit.errors import DomainError
from viscofit.loading import LoadingProtocol, PicnnMaterial, simulate_tension, simulate_torsion
from viscofit.potential import count_active_parameters, forward_energy, inference_gates
from viscofit.reference import (
    COMPOSITIONS,
    DEFAULT_GEOMETRY,
    ENERGY_CONSTANTS,
    GAMMA_DECAY,
    GAMMA_DECAY_POWERS,
    GAMMA_GROW_DEN,
    GAMMA_GROW_DEN_POWERS,
    GAMMA_GROW_NUM,
    GAMMA_GROW_NUM_POWERS,
    PRODUCT_POWERS,
    PRODUCT_RATES,
    ReferenceMaterial,
    gamma_reference,
    psi_reference,
    psi_reference_normalized,
    reference_energy_derivs,
    reference_gamma_mlp,
    reference_picnn,
    reference_qlv,
    synthesize_dataset,
)
from viscofit.viscoelastic import gamma_of_composition

# frozen values from an independent 60-digit decimal evaluation of the
# closed-form expressions, computed before this module was written
PSI_REGRESSION = {
    (3.0, 3.0, 0.0): 7.274578515403833263748238583891,
    (5.0, 4.25, 0.0): 7.603930548408724970805825926841,
    (5.0, 4.25, 0.5): 9.356608150523951726112568208056,
    (4.0, 4.0, 1.0): 12.106646083596993343533112928694,
    (3.5, 3.2, 2.0895): 21.190080200714768248631987435975,
    (6.0, 5.0, 2.0895): 22.289391050821255090816633775644,
}
GAMMA_REGRESSION = {
    0.0: 0.248568255756000703812924479485,
    0.1755: 0.286013001494765981258380422538,
    0.4669: 0.350262776753567508448695003374,
    1.0: 0.465907223252044206628194934922,
    2.0895: 0.660569020165541535135589882588,
    3.0: 0.774579492387627728318342900642,
}

CONSTANTS_SHA256 = "ce58d29cae9d01e1094ca24690f1d15be0ab6484db5023c2db99ac3017653456"


def test_constant_checksum():
    payload = repr((
        PRODUCT_RATES, PRODUCT_POWERS, sorted(ENERGY_CONSTANTS.items()),
        GAMMA_DECAY, GAMMA_DECAY_POWERS, GAMMA_GROW_NUM,
        GAMMA_GROW_NUM_POWERS, GAMMA_GROW_DEN, GAMMA_GROW_DEN_POWERS,
        sorted(COMPOSITIONS.items()),
    )).encode()
    assert hashlib.sha256(payload).hexdigest() == CONSTANTS_SHA256


class TestEnergy:
    def test_decimal_oracle_regression(self):
        for (i1, i2, c), expected in PSI_REGRESSION.items():
            assert psi_reference(i1, i2, c) == pytest.approx(expected, rel=1e-13)

    def test_normalization_identity(self):
        for c in COMPOSITIONS.values():
            assert psi_reference_normalized(3.0, 3.0, c) == 0.0
            assert psi_reference(3.0, 3.0, c) > 0.0

    def test_domain_checks(self):
        with pytest.raises(DomainError):
            psi_reference(2.5, 3.0, 0.0)
        with pytest.raises(DomainError):
            psi_reference(3.0, 3.0, -0.5)

    def test_log_space_stable_at_large_composition(self):
        # the coupling product's log exceeds 130 here; the evaluation must
        # stay finite and moderate
        val = psi_reference(6.0, 5.0, 2.0895)
        assert np.isfinite(val) and val < 100.0

    def test_energy_derivs_match_fd(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            i1, i2 = rng.uniform(3.0, 7.0, 2)
            c = rng.uniform(0.0, 2.1)
            d1, d2 = reference_energy_derivs(i1, i2, c)
            h = 1e-6
            fd1 = (psi_reference(i1 + h, i2, c) - psi_reference(i1 - h, i2, c)) / (2 * h)
            fd2 = (psi_reference(i1, i2 + h, c) - psi_reference(i1, i2 - h, c)) / (2 * h)
            assert float(d1) == pytest.approx(fd1, rel=1e-6)
            assert float(d2) == pytest.approx(fd2, rel=1e-6, abs=1e-10)

    def test_convexity_probe(self):
        rng = np.random.default_rng(9)
        h = 1e-3
        for _ in range(500):
            i1, i2 = rng.uniform(3.0 + 2 * h, 7.0, 2)
            c = rng.uniform(0.0, 2.1)

            def f(a, b):
                return psi_reference(a, b, c)

            h11 = (f(i1 + h, i2) - 2 * f(i1, i2) + f(i1 - h, i2)) / h**2
            h22 = (f(i1, i2 + h) - 2 * f(i1, i2) + f(i1, i2 - h)) / h**2
            h12 = (f(i1 + h, i2 + h) - f(i1 + h, i2 - h)
                   - f(i1 - h, i2 + h) + f(i1 - h, i2 - h)) / (4 * h**2)
            eig = np.linalg.eigvalsh(np.array([[h11, h12], [h12, h22]]))
            assert eig.min() >= -1e-8


class TestNetworkEmbedding:
    def test_energy_matches_network_route(self):
        model = reference_picnn()
        z = inference_gates(model)
        rng = np.random.default_rng(1)
        for _ in range(200):
            i1, i2 = rng.uniform(3.0, 7.0, 2)
            c = rng.uniform(0.0, 2.1)
            a = psi_reference(i1, i2, c)
            b = forward_energy(i1, i2, c, model, z)
            assert abs(a - b) <= 1e-9 * max(1.0, abs(a))

    def test_embedding_gates_are_binary(self):
        model = reference_picnn()
        z = inference_gates(model)
        for m in model.matrices:
            assert set(np.unique(z[m.name])).issubset({0.0, 1.0})

    def test_embedding_active_counts_match_printed_terms(self):
        counts = count_active_parameters(reference_picnn())
        # the printed formula has 13 energy-side constants, 4 product rates
        # and 4 product powers
        assert counts.nc == 4
        assert counts.ncfc == 4
        assert counts.fc == 13
        assert counts.fc + counts.nc + counts.ncfc == 21

    def test_stress_route_agreement(self):
        model = reference_picnn()
        mat_net = PicnnMaterial(model, inference_gates(model))
        mat_ref = ReferenceMaterial()
        lams = np.linspace(1.0, 2.0, 11)
        for c in (0.0, 0.4669, 2.0895):
            p1n, p2n = mat_net.energy_derivs(
                lams * lams + 2 / lams, 2 * lams + 1 / lams**2, c)
            p1r, p2r = mat_ref.energy_derivs(
                lams * lams + 2 / lams, 2 * lams + 1 / lams**2, c)
            np.testing.assert_allclose(p1n, p1r, rtol=1e-9)
            np.testing.assert_allclose(p2n, p2r, rtol=1e-9, atol=1e-12)

    def test_simulated_curves_agree_between_routes(self):
        # the closed form and its network embedding drive the same forward
        # solvers to the same curves
        model = reference_picnn()
        mat_net = PicnnMaterial(model, inference_gates(model))
        mat_ref = ReferenceMaterial()
        qlv = reference_qlv()
        proto_t = LoadingProtocol(mode="tension", rate=0.09, duration=11.11,
                                  time_step=11.11 / 199, composition=0.0)
        a = simulate_tension(proto_t, mat_ref, qlv).outputs
        b = simulate_tension(proto_t, mat_net, qlv).outputs
        assert np.max(np.abs(a - b)) <= 1e-8 * np.max(np.abs(a))
        proto_r = LoadingProtocol(mode="torsion", rate=360.0, duration=60.0,
                                  time_step=60.0 / 199, composition=1.0,
                                  geometry=DEFAULT_GEOMETRY)
        a = simulate_torsion(proto_r, mat_ref, qlv).outputs
        b = simulate_torsion(proto_r, mat_net, qlv).outputs
        assert np.max(np.abs(a - b)) <= 1e-8 * np.max(np.abs(a))

    def test_quadrature_orders_agree_on_reference_material(self):
        from viscofit.loading import torsion_torque_curve

        phis = np.linspace(0.0, 4.0 * np.pi, 25)  # up to 720 degrees
        for c in (0.0, 1.0, 2.0895):
            t8 = torsion_torque_curve(phis, DEFAULT_GEOMETRY, c,
                                      ReferenceMaterial(), order=8)
            t16 = torsion_torque_curve(phis, DEFAULT_GEOMETRY, c,
                                       ReferenceMaterial(), order=16)
            scale = np.max(np.abs(t16))
            assert np.max(np.abs(t8 - t16)) <= 1e-6 * scale


class TestGammaReference:
    def test_decimal_oracle_regression(self):
        for c, expected in GAMMA_REGRESSION.items():
            assert float(gamma_reference(c)) == pytest.approx(expected, rel=1e-12)

    def test_hand_value_at_zero(self):
        # every exponential equals 1 at c = 0, so the ratio is 2^1.596
        expected = 1.0 / (2.0**1.596 + 1.0)
        assert float(gamma_reference(0.0)) == pytest.approx(expected, abs=1e-4)
        assert float(gamma_reference(0.0)) == pytest.approx(0.2486, abs=1e-4)

    def test_open_interval_and_continuity(self):
        grid = np.linspace(0.0, 3.0, 301)
        vals = gamma_reference(grid)
        assert np.all(vals > 0.0) and np.all(vals < 1.0)
        assert np.max(np.abs(np.diff(vals))) < 0.01  # no jumps on a fine grid

    def test_monotonicity_recorded(self):
        # direction computed, not assumed: the published map increases with
        # the stiff-phase content
        grid = np.linspace(0.0, 2.1, 200)
        vals = gamma_reference(grid)
        assert np.all(np.diff(vals) > 0.0)

    def test_mlp_route_matches(self):
        mlp = reference_gamma_mlp()
        for c in (0.0, 0.1755, 0.4669, 1.0, 2.0895):
            assert float(gamma_of_composition(c, mlp)) == pytest.approx(
                float(gamma_reference(c)), rel=1e-12)


class TestSynthesize:
    def test_default_protocol_grid(self):
        records = synthesize_dataset(seed=1)
        assert len(records) == 20  # 5 compositions x (3 tension + 1 torsion)
        modes = [r.mode for r in records]
        assert modes.count("tension") == 15 and modes.count("torsion") == 5
        roles = {r.composition_name: r.role for r in records}
        assert roles["DM-40"] == "test-interpolation"
        assert roles["DM-70"] == "test-extrapolation"
        assert roles["A"] == roles["DM-50"] == roles["DM-60"] == "train"

    def test_noise_free_matches_simulation(self):
        records = synthesize_dataset(compositions=["A"], tension_rates=[0.09],
                                     torsion_rates=[], seed=5)
        rec = records[0]
        proto = LoadingProtocol(mode="tension", rate=0.09,
                                duration=rec.times[-1],
                                time_step=rec.times[1] - rec.times[0],
                                composition=0.0)
        curve = simulate_tension(proto, ReferenceMaterial(), reference_qlv())
        np.testing.assert_allclose(rec.outputs, curve.outputs, rtol=1e-12)

    def test_rate_ordering(self):
        records = synthesize_dataset(seed=2)
        by_key = {(r.composition_name, r.rate): r for r in records
                  if r.mode == "tension"}
        for name in COMPOSITIONS:
            fast = by_key[(name, 0.09)]
            slow = by_key[(name, 0.0009)]
            # equal stretch grids; the faster rate relaxes less
            np.testing.assert_allclose(fast.inputs, slow.inputs, rtol=1e-12)
            assert np.all(fast.outputs[1:] >= slow.outputs[1:] - 1e-12)

    def test_seeded_noise_deterministic(self):
        a = synthesize_dataset(noise_std=0.02, seed=42)
        b = synthesize_dataset(noise_std=0.02, seed=42)
        for ra, rb in zip(a, b):
            np.testing.assert_array_equal(ra.outputs, rb.outputs)
        c = synthesize_dataset(noise_std=0.02, seed=43)
        assert any(np.any(ra.outputs != rc.outputs) for ra, rc in zip(a, c))

    def test_noise_preserves_zero_start(self):
        for rec in synthesize_dataset(noise_std=0.05, seed=3):
            assert rec.outputs[0] == 0.0

    def test_bad_noise(self):
        with pytest.raises(DomainError):
            synthesize_dataset(noise_std=-0.1)

    def test_torsion_record_geometry(self):
        records = synthesize_dataset(seed=1)
        tor = [r for r in records if r.mode == "torsion"]
        for r in tor:
            assert r.geometry == (DEFAULT_GEOMETRY.length, DEFAULT_GEOMETRY.radius)
            assert r.inputs[-1] == pytest.approx(360.0)
