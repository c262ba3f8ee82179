import numpy as np
import pytest

from viscofit.errors import DomainError
from viscofit.kinematics import (
    IsochoricInvariants,
    TensionState,
    TorsionGeometry,
    inv_symmetric_3x3,
    isochoric_invariant_derivatives,
    isochoric_invariants_of,
    push_forward,
    second_pk_deviatoric,
    tension_cauchy_green,
    tension_deformation_gradient,
    tension_invariants,
    torsion_invariants,
)


def random_spd(rng, lo=0.25, hi=4.0):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    eig = rng.uniform(lo, hi, 3)
    return q @ np.diag(eig) @ q.T


class TestTensionKinematics:
    def test_identity_at_unit_stretch(self):
        C = tension_cauchy_green(TensionState(1.0))
        np.testing.assert_allclose(C, np.eye(3), atol=1e-15)

    def test_stretch_two(self):
        C = tension_cauchy_green(TensionState(2.0))
        np.testing.assert_allclose(C, np.diag([4.0, 0.5, 0.5]))

    def test_volume_preserving(self):
        for lam in (0.3, 0.9, 1.7, 4.2):
            C = tension_cauchy_green(TensionState(lam))
            assert np.linalg.det(C) == pytest.approx(1.0, abs=1e-12)

    def test_zero_stretch_rejected(self):
        with pytest.raises(DomainError):
            TensionState(0.0)
        with pytest.raises(DomainError):
            tension_deformation_gradient(-1.0)

    def test_invariants_reference(self):
        inv = tension_invariants(TensionState(1.0))
        assert (inv.i1_bar, inv.i2_bar, inv.jacobian) == (3.0, 3.0, 1.0)

    def test_invariants_hand_values(self):
        inv = tension_invariants(TensionState(2.0))
        assert inv.i1_bar == pytest.approx(5.0)
        assert inv.i2_bar == pytest.approx(4.25)
        inv = tension_invariants(TensionState(0.5))
        assert inv.i1_bar == pytest.approx(4.25)
        assert inv.i2_bar == pytest.approx(5.0)

    def test_invariants_lower_bound(self):
        for lam in np.linspace(0.2, 5.0, 97):
            inv = tension_invariants(TensionState(lam))
            assert inv.i1_bar >= 3.0 - 1e-9
            assert inv.i2_bar >= 3.0 - 1e-9
            if abs(lam - 1.0) > 1e-6:
                assert inv.i1_bar > 3.0
                assert inv.i2_bar > 3.0


class TestTorsionKinematics:
    def test_no_twist(self):
        geom = TorsionGeometry(57.0, 5.0)
        inv = torsion_invariants(3.0, 0.0, geom)
        assert (inv.i1_bar, inv.i2_bar, inv.jacobian) == (3.0, 3.0, 1.0)

    def test_unit_shear(self):
        geom = TorsionGeometry(2.0, 3.0)
        # r*phi/L = 1
        inv = torsion_invariants(2.0, 1.0, geom)
        assert inv.i1_bar == pytest.approx(4.0)
        assert inv.i2_bar == pytest.approx(4.0)

    def test_rod_surface_full_turn(self):
        geom = TorsionGeometry(57.0, 5.0)
        inv = torsion_invariants(5.0, 2.0 * np.pi, geom)
        expected = 3.0 + (10.0 * np.pi / 57.0) ** 2
        assert inv.i1_bar == pytest.approx(expected, rel=1e-14)

    def test_invariants_equal(self):
        geom = TorsionGeometry(57.0, 5.0)
        rng = np.random.default_rng(0)
        for _ in range(50):
            inv = torsion_invariants(rng.uniform(0, 5), rng.uniform(-9, 9), geom)
            assert inv.i1_bar == inv.i2_bar

    def test_radius_bounds(self):
        geom = TorsionGeometry(57.0, 5.0)
        with pytest.raises(DomainError):
            torsion_invariants(5.5, 1.0, geom)
        with pytest.raises(DomainError):
            torsion_invariants(-0.1, 1.0, geom)

    def test_bad_geometry(self):
        with pytest.raises(DomainError):
            TorsionGeometry(0.0, 5.0)


class TestInvariantDerivatives:
    def test_zero_at_identity(self):
        d1, d2 = isochoric_invariant_derivatives(np.eye(3))
        np.testing.assert_allclose(d1, 0.0, atol=1e-14)
        np.testing.assert_allclose(d2, 0.0, atol=1e-14)

    def test_finite_difference_oracle_tension_state(self):
        self._fd_check(np.diag([4.0, 0.5, 0.5]), rel=1e-6)

    def test_finite_difference_oracle_random_spd(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            self._fd_check(random_spd(rng), rel=1e-5)

    @staticmethod
    def _fd_check(C, rel):
        d1, d2 = isochoric_invariant_derivatives(C)
        h = 1e-6

        def invs(Cm):
            inv = isochoric_invariants_of(Cm)
            return inv.i1_bar, inv.i2_bar

        fd1 = np.zeros((3, 3))
        fd2 = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                dC = np.zeros((3, 3))
                # keep the perturbed tensor symmetric
                dC[i, j] += 0.5 * h
                dC[j, i] += 0.5 * h
                up = invs(C + dC)
                dn = invs(C - dC)
                fd1[i, j] = (up[0] - dn[0]) / (2 * h)
                fd2[i, j] = (up[1] - dn[1]) / (2 * h)
        # off-diagonal FD entries measure the symmetrized sensitivity, which
        # equals the matrix derivative entry for symmetric variations
        np.testing.assert_allclose(fd1, d1, rtol=rel, atol=1e-9)
        np.testing.assert_allclose(fd2, d2, rtol=rel, atol=1e-8)

    def test_isochoric_projection_trace_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            C = random_spd(rng)
            C = C / np.linalg.det(C) ** (1.0 / 3.0)  # J = 1
            d1, _ = isochoric_invariant_derivatives(C)
            assert abs(np.sum(d1 * C)) < 1e-10

    def test_singular_rejected(self):
        with pytest.raises(DomainError):
            isochoric_invariant_derivatives(np.diag([1.0, 1.0, 0.0]))

    def test_asymmetric_rejected(self):
        C = np.eye(3)
        C[0, 1] = 1e-6
        with pytest.raises(DomainError):
            isochoric_invariant_derivatives(C)

    def test_adjugate_inverse_matches_numpy(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            C = random_spd(rng)
            np.testing.assert_allclose(inv_symmetric_3x3(C), np.linalg.inv(C),
                                       rtol=1e-10, atol=1e-12)


class TestStressChain:
    def test_zero_stress_at_identity(self):
        S = second_pk_deviatoric(np.eye(3), 0.7, -0.3)
        np.testing.assert_allclose(S, 0.0, atol=1e-14)

    def test_zero_partials(self):
        S = second_pk_deviatoric(np.diag([4.0, 0.5, 0.5]), 0.0, 0.0)
        np.testing.assert_allclose(S, 0.0, atol=1e-15)

    def test_neo_hookean_closed_form(self):
        # dpsi/dI1 = mu/2 with mu = 1: S' = mu J^(-2/3) (1 - tr(C)/3 C^-1)
        C = np.diag([4.0, 0.5, 0.5])
        S = second_pk_deviatoric(C, 0.5, 0.0)
        trC = 5.0
        expected = np.eye(3) - trC / 3.0 * np.linalg.inv(C)
        np.testing.assert_allclose(S, expected, rtol=1e-12)

    def test_push_forward_identity(self):
        S = np.diag([1.0, 2.0, 3.0])
        np.testing.assert_allclose(push_forward(np.eye(3), S), S)

    def test_push_forward_zero(self):
        F = tension_deformation_gradient(1.8)
        np.testing.assert_allclose(push_forward(F, np.zeros((3, 3))), 0.0)

    def test_push_forward_negative_det_rejected(self):
        with pytest.raises(DomainError):
            push_forward(-np.eye(3), np.eye(3))

    def test_push_forward_symmetry(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            F = rng.normal(size=(3, 3))
            if np.linalg.det(F) <= 0:
                F = -F
            S = random_spd(rng)
            sig = push_forward(F, S)
            assert np.max(np.abs(sig - sig.T)) <= 1e-12

    def test_uniaxial_neo_hookean_stress_difference(self):
        # full chain at lambda = 2, mu = 1: sigma11 - sigma22 = lam^2 - 1/lam
        lam = 2.0
        C = tension_cauchy_green(TensionState(lam))
        S = second_pk_deviatoric(C, 0.5, 0.0)
        F = tension_deformation_gradient(lam)
        sig = push_forward(F, S)
        assert sig[0, 0] - sig[1, 1] == pytest.approx(lam**2 - 1.0 / lam, rel=1e-12)
        assert sig[0, 0] - sig[1, 1] == pytest.approx(3.5)


def test_invariants_dataclass_passthrough():
    inv = IsochoricInvariants(3.5, 3.4, 1.0)
    assert inv.i1_bar == 3.5 and inv.i2_bar == 3.4 and inv.jacobian == 1.0
