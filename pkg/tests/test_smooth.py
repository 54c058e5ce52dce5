import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from leakynet.flow import random_lu_network
from leakynet.netcore import Layer, Network, leaky_relu, layer
from leakynet.smooth import (
    SmoothedActivation,
    SmoothNetwork,
    invert_smoothed_scalar,
    kernel_cdf,
    mean_abs_kernel,
    mollifier_constant,
    mollifier_eval,
    smoothed_lrelu_deriv,
    smoothed_lrelu_eval,
)


class TestMollifier:
    @pytest.mark.parametrize("n", [1, 3, 64])
    def test_unit_mass(self, n):
        mass, _ = quad(lambda t: float(mollifier_eval(n, t)), -1.0 / n, 1.0 / n, epsabs=1e-13)
        assert mass == pytest.approx(1.0, abs=1e-10)

    def test_support(self):
        n = 8
        x = np.array([-1.0, -1 / n, 1 / n, 0.2, 5.0])
        np.testing.assert_array_equal(mollifier_eval(n, x), 0.0)
        assert mollifier_eval(n, 0.99 / n) > 0

    def test_even(self):
        x = np.linspace(-1, 1, 41)
        np.testing.assert_array_equal(mollifier_eval(3, x), mollifier_eval(3, -x))

    def test_constant(self):
        # independent reference: 1 / int exp(1/(x^2-1)) dx
        assert mollifier_constant() == pytest.approx(2.2522836210435813, rel=1e-12)

    def test_kernel_cdf(self):
        s = np.linspace(-1.5, 1.5, 301)
        P = kernel_cdf(s)
        assert np.all(np.diff(P) >= -1e-15)  # monotone up to rounding
        np.testing.assert_allclose(P + kernel_cdf(-s), 1.0, atol=1e-14)
        assert kernel_cdf(0.0) == pytest.approx(0.5, abs=1e-15)

    def test_mean_abs(self):
        val, _ = quad(lambda t: abs(t) * float(mollifier_eval(1, t)), -1, 1, points=[0.0])
        assert mean_abs_kernel() == pytest.approx(val, rel=1e-10)


class TestActivation:
    def test_outside_window_is_exact(self):
        act = SmoothedActivation(0.5, 4)
        assert act(1.0) == 1.0
        assert act(-1.0) == -0.5
        assert smoothed_lrelu_eval(act, 1.0) == 1.0

    def test_value_at_zero(self):
        act = SmoothedActivation(0.5, 4)
        ref, _ = quad(lambda t: max(-t, 0.0) * 0.5 * float(mollifier_eval(4, t)) + max(t, 0.0) * float(mollifier_eval(4, t)), -0.25, 0.25, points=[0.0])
        # closed form: (1 - a) E|T| / (2 n)
        assert act(0.0) > 0
        assert float(act(0.0)) == pytest.approx(0.5 * mean_abs_kernel() / 8, rel=1e-10)
        assert smoothed_lrelu_eval(act, 0.0) == pytest.approx(float(act(0.0)), rel=1e-10)
        assert ref > 0

    @pytest.mark.parametrize("alpha", [0.01, 0.1, 0.5, 0.9])
    @pytest.mark.parametrize("n", [1, 7, 1000])
    def test_gap_at_most_one_over_n(self, alpha, n):
        act = SmoothedActivation(alpha, n)
        x = np.linspace(-3.0 / n, 3.0 / n, 2001)
        gap = np.max(np.abs(act(x) - leaky_relu(x, alpha)))
        assert gap <= 1.0 / n
        assert gap == pytest.approx((1 - alpha) * mean_abs_kernel() / (2 * n), rel=1e-6)

    def test_vectorised_matches_quadrature(self):
        act = SmoothedActivation(0.3, 5)
        for x in np.linspace(-0.25, 0.25, 23):
            assert float(act(x)) == pytest.approx(smoothed_lrelu_eval(act, x), abs=1e-12)

    @pytest.mark.parametrize("n", [2, 50])
    def test_derivative(self, n):
        act = SmoothedActivation(0.2, n)
        x = np.linspace(-2.0 / n, 2.0 / n, 401)
        d = act.deriv(x)
        assert np.all((d >= 0.2) & (d <= 1.0))
        h = 1e-4 / n
        fd = (act(x + h) - act(x - h)) / (2 * h)
        np.testing.assert_allclose(d, fd, atol=1e-6)
        assert smoothed_lrelu_deriv(act, 0.0) == pytest.approx(0.6)

    @settings(max_examples=200)
    @given(
        st.floats(0.01, 0.99),
        st.integers(1, 10_000),
        st.floats(-5, 5, allow_nan=False),
    )
    def test_round_trip(self, alpha, n, x):
        act = SmoothedActivation(alpha, n)
        back = act.inverse(act(np.array([x])))[0]
        assert abs(back - x) <= 1e-9 * (1 + abs(x))

    def test_inverse_of_value_at_zero(self):
        act = SmoothedActivation(0.5, 4)
        assert invert_smoothed_scalar(act, smoothed_lrelu_eval(act, 0.0)) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("alpha,n", [(0.0, 2), (1.0, 2), (1.5, 2), (0.5, 0), (0.5, 2.5)])
    def test_validation(self, alpha, n):
        with pytest.raises(ValueError):
            SmoothedActivation(alpha, n)


class TestSmoothNetwork:
    def test_close_to_original(self, rng):
        net = random_lu_network(3, 4, rng)
        sn = SmoothNetwork(net, 2**20)
        x = rng.uniform(-2, 2, (20_000, 3))
        gap = np.max(np.abs(sn(x) - net.forward(x)))
        assert gap <= 1e-4
        assert gap <= sn.composition_bound() + 1e-12

    def test_bound_holds_small_n(self, rng):
        net = random_lu_network(2, 3, rng)
        sn = SmoothNetwork(net, 3)
        x = rng.uniform(-2, 2, (20_000, 2))
        assert np.max(np.abs(sn(x) - net.forward(x))) <= sn.composition_bound()

    def test_exact_away_from_kinks(self):
        net = Network((layer(np.eye(2), [1.0, -1.0], 0.5), layer([[2.0, 0.0], [1.0, 1.0]], [0.0, 0.0], 0.25)), 2)
        sn = SmoothNetwork(net, 4)
        x = np.array([[0.5, 3.0], [1.0, 2.0]])  # every pre-activation is at least 1/4
        np.testing.assert_array_equal(sn(x), net.forward(x))

    def test_bijection(self, rng):
        net = random_lu_network(3, 5, rng)
        sn = SmoothNetwork(net, 10)
        x = rng.uniform(-3, 3, (5000, 3))
        np.testing.assert_allclose(sn.inverse(sn(x)), x, atol=1e-8)

    def test_rejects_identity_units(self):
        net = Network((Layer(np.eye(2), np.zeros(2), np.array([0.5, 1.0])),), 2)
        with pytest.raises(ValueError):
            SmoothNetwork(net, 4)

    def test_to_dict(self, rng):
        d = SmoothNetwork(random_lu_network(2, 2, rng), 8).to_dict()
        assert d["n"] == 8 and "network" in d
