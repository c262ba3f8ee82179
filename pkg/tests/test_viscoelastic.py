import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from viscofit.errors import ConfigError, DomainError
from viscofit.viscoelastic import (
    GammaMlp,
    QlvKernel,
    QlvModel,
    StressHistory,
    gamma_mlp_gradients,
    gamma_of_composition,
    qlv_convolve,
    qlv_convolve_brute,
    relaxation_matrix,
)


def ramp_history(rate=0.3, t_end=50.0, dt=0.01):
    t = np.arange(0.0, t_end + dt / 2, dt)
    return StressHistory(t, rate * t)


class TestKernelAndHistory:
    def test_kernel_bounds(self):
        QlvKernel(0.0)
        QlvKernel(1.0)
        with pytest.raises(DomainError):
            QlvKernel(-0.1)
        with pytest.raises(DomainError):
            QlvKernel(1.1)
        with pytest.raises(DomainError):
            QlvKernel(0.5, tau=0.0)

    def test_history_validation(self):
        with pytest.raises(DomainError):
            StressHistory(np.array([0.0, 1.0, 1.0]), np.zeros(3))
        with pytest.raises(DomainError):
            StressHistory(np.array([0.5, 1.0]), np.zeros(2))
        with pytest.raises(DomainError):
            StressHistory(np.array([0.0, 1.0]), np.array([0.0, np.inf]))


class TestGammaMlp:
    def test_zero_network_gives_half(self):
        mlp = GammaMlp(w_hidden=np.zeros(8), w_out=np.zeros(8))
        assert float(gamma_of_composition(1.3, mlp)) == pytest.approx(0.5)

    def test_hand_built_single_unit(self):
        mlp = GammaMlp(w_hidden=np.array([0.9]), w_out=np.array([-1.4]))
        c = 0.6
        hidden = np.log1p(np.exp(0.9 * c))
        expected = 1.0 / (1.0 + np.exp(1.4 * hidden))
        assert float(gamma_of_composition(c, mlp)) == pytest.approx(expected, rel=1e-14)

    def test_open_interval(self):
        mlp = GammaMlp.initialize(seed=4)
        for c in (0.0, 0.4669, 2.0895):
            g = float(gamma_of_composition(c, mlp))
            assert 0.0 < g < 1.0

    def test_gradients_match_fd(self):
        mlp = GammaMlp.initialize(seed=1)
        c = 0.8
        g, dh, do = gamma_mlp_gradients(c, mlp)
        h = 1e-6
        for i in range(mlp.w_hidden.size):
            mlp.w_hidden[i] += h
            up = float(gamma_of_composition(c, mlp))
            mlp.w_hidden[i] -= 2 * h
            dn = float(gamma_of_composition(c, mlp))
            mlp.w_hidden[i] += h
            assert (up - dn) / (2 * h) == pytest.approx(dh[i], rel=1e-6, abs=1e-12)
        for i in range(mlp.w_out.size):
            mlp.w_out[i] += h
            up = float(gamma_of_composition(c, mlp))
            mlp.w_out[i] -= 2 * h
            dn = float(gamma_of_composition(c, mlp))
            mlp.w_out[i] += h
            assert (up - dn) / (2 * h) == pytest.approx(do[i], rel=1e-6, abs=1e-12)

    def test_mismatched_shapes(self):
        with pytest.raises(ConfigError):
            GammaMlp(w_hidden=np.zeros(8), w_out=np.zeros(7))


class TestConvolution:
    def test_gamma_zero_identity(self):
        hist = ramp_history()
        out = qlv_convolve(hist, QlvKernel(0.0, 10.0))
        np.testing.assert_array_equal(out.values, hist.values)

    def test_step_input_closed_form(self):
        t = np.arange(0.0, 80.0 + 5e-3, 0.01)
        sigma0 = 2.5
        hist = StressHistory(t, np.full_like(t, sigma0))
        for g in (0.3, 0.7, 1.0):
            out = qlv_convolve(hist, QlvKernel(g, 10.0))
            exact = sigma0 * (1.0 - g * (1.0 - np.exp(-t / 10.0)))
            # relative to the curve scale (the gamma = 1 tail crosses zero)
            assert np.max(np.abs(out.values - exact)) <= 1e-4 * sigma0
            # long-time limit approaches sigma0 (1 - gamma)
            assert out.values[-1] == pytest.approx(sigma0 * (1.0 - g), abs=1e-3)

    def test_ramp_input_closed_form(self):
        k = 0.3
        hist = ramp_history(rate=k, t_end=50.0, dt=0.01)
        out = qlv_convolve(hist, QlvKernel(1.0, 10.0))
        for t_probe in (10.0, 50.0):
            i = int(round(t_probe / 0.01))
            exact = k * 10.0 * (1.0 - np.exp(-t_probe / 10.0))
            assert out.values[i] == pytest.approx(exact, rel=1e-4)

    def test_multiplier_form(self):
        hist = ramp_history(dt=0.5)
        out = qlv_convolve(hist, QlvKernel(0.6, 10.0), form="multiplier")
        expected = hist.values * (1.0 - 0.6 * (1.0 - np.exp(-hist.times / 10.0)))
        np.testing.assert_allclose(out.values, expected, rtol=1e-14)

    def test_unknown_form(self):
        with pytest.raises(ConfigError):
            qlv_convolve(ramp_history(dt=1.0), QlvKernel(0.5), form="banana")

    def test_recursion_matches_brute_oracle_nonuniform(self):
        rng = np.random.default_rng(5)
        t = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 40.0, 80))])
        v = np.sin(t / 4.0) + 0.05 * t
        hist = StressHistory(t, v)
        for g in (0.2, 0.9):
            a = qlv_convolve(hist, QlvKernel(g, 10.0)).values
            b = qlv_convolve_brute(hist, QlvKernel(g, 10.0)).values
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)

    def test_relaxation_matrix_matches_recursion(self):
        hist = ramp_history(dt=0.25, t_end=30.0)
        A = relaxation_matrix(hist.times, 10.0)
        for g in (0.35, 1.0):
            direct = qlv_convolve(hist, QlvKernel(g, 10.0)).values
            via_matrix = hist.values - g * (A @ hist.values)
            np.testing.assert_allclose(via_matrix, direct, rtol=1e-12, atol=1e-14)

    def test_step_size_convergence_order(self):
        # trapezoidal: halving dt cuts the error by about 4
        k = QlvKernel(1.0, 10.0)
        errs = []
        for dt in (0.4, 0.2, 0.1):
            hist = ramp_history(rate=1.0, t_end=20.0, dt=dt)
            out = qlv_convolve(hist, k).values[-1]
            exact = 10.0 * (1.0 - np.exp(-2.0))
            errs.append(abs(out - exact))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.2)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.1, 2.0), st.integers(0, 10_000))
    def test_linearity(self, g, scale, seed):
        rng = np.random.default_rng(seed)
        t = np.linspace(0.0, 20.0, 41)
        x = rng.normal(size=41)
        y = rng.normal(size=41)
        k = QlvKernel(g, 10.0)
        lhs = qlv_convolve(StressHistory(t, 2.0 * x + scale * y), k).values
        rhs = (2.0 * qlv_convolve(StressHistory(t, x), k).values
               + scale * qlv_convolve(StressHistory(t, y), k).values)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_causality(self):
        rng = np.random.default_rng(8)
        t = np.linspace(0.0, 30.0, 61)
        v = rng.normal(size=61)
        k = QlvKernel(0.8, 10.0)
        full = qlv_convolve(StressHistory(t, v), k).values
        cut = 40
        trunc = qlv_convolve(StressHistory(t[:cut], v[:cut]), k).values
        np.testing.assert_allclose(full[:cut], trunc, rtol=1e-13, atol=1e-15)

    def test_bounded_attenuation(self):
        # non-negative, monotone input on a grid fine enough for trapezoid
        t = np.linspace(0.0, 60.0, 601)
        v = np.sqrt(t)
        for g in (0.0, 0.4, 1.0):
            out = qlv_convolve(StressHistory(t, v), QlvKernel(g, 10.0)).values
            assert np.all(out <= v + 1e-9)
            assert np.all(out >= (1.0 - g) * v - 1e-6)


class TestQlvModel:
    def test_needs_some_gamma_source(self):
        with pytest.raises(ConfigError):
            QlvModel()

    def test_fixed_gamma(self):
        q = QlvModel(fixed_gamma=0.25)
        assert q.gamma(1.7) == 0.25
        assert q.kernel_for(0.0) == QlvKernel(0.25, 10.0)

    def test_mlp_gamma(self):
        mlp = GammaMlp.initialize(seed=3)
        q = QlvModel(gamma_mlp=mlp)
        assert q.gamma(0.5) == pytest.approx(float(gamma_of_composition(0.5, mlp)))

    def test_bad_form(self):
        with pytest.raises(ConfigError):
            QlvModel(fixed_gamma=0.1, form="nope")
