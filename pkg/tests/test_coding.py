import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leakynet import coding
from leakynet.coding import (
    CodingParams,
    InfeasibleBudget,
    accuracy_bound,
    build_bit_extract_net,
    build_decoder_net_relu,
    build_encoder_net,
    build_memorizer_net,
    build_quantizer_net,
    coding_scheme_exact,
    decode_exact,
    encode_exact,
    grid,
    memorize_exact,
    quantize,
    relu_to_leaky,
)
from leakynet.metrics import Box, lp_norm_gap, modulus_estimate, sup_norm_gap
from leakynet.netcore import identity_network, width_stats
from leakynet.targets import get_target, smooth_target


def grid_points(K, dx):
    g = grid(K)
    return np.array(list(itertools.product(g, repeat=dx)))


class TestParams:
    def test_bit_budget(self):
        CodingParams(26, 26, 2, 2)
        with pytest.raises(ValueError):
            CodingParams(27, 3, 2, 1)
        with pytest.raises(ValueError):
            CodingParams(0, 3)


class TestExactForms:
    def test_quantize_examples(self):
        assert quantize(0.3, 2) == 0.25
        assert quantize(0.75, 2) == 0.75

    def test_quantize_error_bound(self, rng):
        x = rng.random(100_000)
        err = x - quantize(x, 6)
        assert np.all(err >= 0) and np.max(err) <= 2.0**-6

    def test_quantize_clamps_with_flag(self):
        q, flag = quantize(np.array([-0.2, 1.3]), 3, return_flag=True)
        assert flag
        np.testing.assert_array_equal(q, [0.0, 1 - 2.0**-3])

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 1), st.integers(1, 20))
    def test_quantize_idempotent(self, x, n):
        q = quantize(x, n)
        assert quantize(q, n) == q
        assert q <= x

    def test_encode_examples(self):
        assert encode_exact([0.5, 0.5], 1) == 0.75
        assert encode_exact([0.25, 0.5], 2) == 0.375
        x = np.linspace(0, 1, 17)[:, None]
        np.testing.assert_array_equal(encode_exact(x, 3), quantize(x[:, 0], 3))

    def test_decode_examples(self):
        np.testing.assert_array_equal(decode_exact(0.375, 2, 2), [0.25, 0.5])
        np.testing.assert_array_equal(decode_exact(0.0, 3, 2), [0.0, 0.0])

    def test_decode_round_trip(self):
        v = grid_points(2, 2)
        np.testing.assert_array_equal(decode_exact(encode_exact(v, 2), 2, 2), v)

    def test_decode_rejects_off_grid(self):
        with pytest.raises(ValueError):
            decode_exact(0.3, 2, 2)

    def test_memorize_identity(self):
        v = grid_points(2, 2)
        c = encode_exact(v, 2)
        ident = lambda x: x
        np.testing.assert_array_equal(memorize_exact(c, ident, 2, 2, dx=2), c)

    def test_memorize_constant(self):
        c = grid(4)
        out = memorize_exact(c, lambda x: np.full((x.shape[0], 2), 0.5), 2, 2, dx=2)
        np.testing.assert_array_equal(out, 0.5 + 0.25 * 0.5)

    def test_memorize_swap_table(self):
        # codes of (x1, x2) in C_1^2 are x1 + x2/2; swapping gives x2 + x1/2
        table = {0.0: 0.0, 0.25: 0.5, 0.5: 0.25, 0.75: 0.75}
        swap = lambda x: x[:, ::-1]
        for c, expected in table.items():
            assert memorize_exact(c, swap, 1, 1, dx=2) == expected

    def test_scheme_identity_on_grid(self):
        p = CodingParams(4, 3, 2, 2)
        x = grid_points(4, 2)
        out = coding_scheme_exact(x, lambda u: u, p)
        assert np.max(np.abs(out - x)) <= 2.0**-3

    def test_scheme_piecewise_constant(self, rng):
        p = CodingParams(3, 3, 1, 1)
        f = get_target("sawtooth1")
        c = grid(3)
        x = c + rng.random(c.size) * 2.0**-3 * 0.999
        np.testing.assert_array_equal(coding_scheme_exact(x[:, None], f, p), coding_scheme_exact(c[:, None], f, p))

    def test_accuracy_bound(self):
        assert accuracy_bound(lambda r: r, 3, 3) == 0.25
        assert accuracy_bound(lambda r: 5 * r, 4, 2) == 5 / 16 + 0.25
        vals = [accuracy_bound(lambda r: r, k, k) for k in range(1, 8)]
        assert all(b < a for a, b in zip(vals, vals[1:]))


class TestQuantizerNet:
    def test_exact_on_grid(self):
        for K in (1, 2, 4, 6):
            net, _ = build_quantizer_net(K, 1e-3, 0.1)
            c = grid(K)
            np.testing.assert_allclose(net(c)[:, 0], c, rtol=0, atol=1e-12)

    def test_strip_measure(self):
        _, rep = build_quantizer_net(3, 1e-3, 0.1)
        assert rep.strip_measure < 0.1
        assert sum(b - a for a, b in rep.strips) < 0.1

    def test_off_strip_gap(self, rng):
        net, rep = build_quantizer_net(3, 1e-3, 0.1)
        x = rng.random(10_000)
        x = x[~rep.mask(x[:, None])]
        out = net(x)[:, 0]
        assert np.max(np.abs(out - quantize(x, 3))) < 1e-3
        assert np.all((out >= 0) & (out <= 1))

    def test_invalid(self):
        with pytest.raises(ValueError):
            build_quantizer_net(3, 0.0, 0.1)
        with pytest.raises(ValueError):
            build_quantizer_net(3, 1e-3, 1.0)
        with pytest.raises(InfeasibleBudget):
            build_quantizer_net(3, 1e-300, 0.1)


class TestEncoderNet:
    def test_example(self):
        net, _ = build_encoder_net(1, 2, 1e-3, 0.1)
        assert net([0.5, 0.5])[0] == pytest.approx(0.75, abs=1e-12)

    def test_exact_on_grid(self):
        net, _ = build_encoder_net(2, 2, 1e-3, 0.1)
        v = grid_points(2, 2)
        np.testing.assert_allclose(net(v)[:, 0], encode_exact(v, 2), rtol=0, atol=1e-12)

    def test_range_and_off_strip_gap(self, rng):
        net, rep = build_encoder_net(3, 2, 1e-4, 0.1)
        x = rng.random((100_000, 2))
        out = net(x)[:, 0]
        assert np.all((out >= 0) & (out < 2))
        keep = ~rep.mask(x)
        assert np.max(np.abs(out[keep] - encode_exact(x[keep], 3))) < 1e-4
        assert rep.measure < 0.1


class TestMemorizerNet:
    def test_identity_1d(self):
        net = build_memorizer_net(lambda x: x, 2, 2, 1, 1)
        c = grid(2)
        np.testing.assert_allclose(net(c)[:, 0], c, atol=1e-9)

    def test_swap_table(self):
        swap = lambda x: x[:, ::-1]
        net = build_memorizer_net(swap, 1, 1, 2, 2)
        c = grid(2)
        np.testing.assert_allclose(net(c)[:, 0], memorize_exact(c, swap, 1, 1, dx=2), atol=1e-9)
        assert width_stats(net).w_max == 2

    def test_exact_on_all_codes(self):
        f = smooth_target(2, 2)
        net = build_memorizer_net(f, 3, 3, 2, 2)
        c = grid(6)
        np.testing.assert_allclose(net(c)[:, 0], memorize_exact(c, f, 3, 3, dx=2), atol=1e-9)


class TestDecoder:
    def test_bit_extract_examples(self):
        net = build_bit_extract_net(1, 0.1)
        np.testing.assert_allclose(net(0.75), [0.5, 0.5], atol=1e-15)
        np.testing.assert_array_equal(net(0.0), [0.0, 0.0])

    def test_bit_extract_exact_on_fine_grid(self):
        net = build_bit_extract_net(2, 2.0**-5)
        c = grid(4)
        q = quantize(c, 2)
        np.testing.assert_allclose(net(c), np.column_stack([q, 4 * (c - q)]), atol=1e-14)

    def test_bit_extract_delta_guard(self):
        with pytest.raises(ValueError):
            build_bit_extract_net(2, 0.25)

    def test_decoder_example(self):
        net = build_decoder_net_relu(2, 2)
        np.testing.assert_array_equal(net(0.375), [0.25, 0.5])

    @pytest.mark.parametrize("dy", [1, 2, 3])
    def test_decoder_exact_on_codes(self, dy):
        net = build_decoder_net_relu(2, dy)
        c = grid(2 * dy)
        np.testing.assert_array_equal(net(c[:, None]), decode_exact(c, 2, dy).reshape(-1, dy))
        if dy >= 2:
            assert width_stats(net).w_max == dy

    def test_leaky_substitution(self):
        net = build_decoder_net_relu(2, 2)
        c = grid(4)[:, None]
        leaky = relu_to_leaky(net, c, 1e-6)
        assert np.all(leaky.alphas() > 0)
        assert np.max(np.abs(leaky.forward(c) - net.forward(c))) < 1e-5

    def test_relu_free_net_unchanged(self):
        net = identity_network(2)
        assert relu_to_leaky(net, np.zeros((1, 2)), 1e-6).equals(net)

    def test_invalid_delta(self):
        with pytest.raises(ValueError):
            relu_to_leaky(identity_network(1), np.zeros((1, 1)), 0.0)


class TestCompile:
    def test_identity2_gap_within_bound(self):
        f = get_target("identity2")
        net, rep = coding.compile(f, Box.cube(2), CodingParams(4, 4, 2, 2))
        assert rep.grid_gap_lp <= rep.bound + 0.02
        assert rep.strips.measure < rep.gamma
        a = net.alphas()
        assert np.all((a > 0) & (a < 1))

    @pytest.mark.parametrize("dx,dy", list(itertools.product([1, 2, 3], repeat=2)))
    def test_width_and_bottleneck(self, dx, dy):
        f = smooth_target(dx, dy)
        net, rep = coding.compile(f, Box.cube(dx), CodingParams(2, 2, dx, dy), measure=False)
        s = width_stats(net)
        assert s.w_max == max(2, dx, dy) == rep.width
        assert s.d_min == 1

    def test_constant_target(self):
        f = get_target("const2")
        net, rep = coding.compile(f, Box.cube(2), CodingParams(3, 3, 2, 2))
        assert rep.grid_gap_sup_offstrips <= rep.bound

    def test_shifted_box(self):
        f = lambda x: np.column_stack([np.sum(x, axis=1)])
        box = Box.cube(2, -3.0, 1.0)
        net, rep = coding.compile(f, box, CodingParams(5, 5, 2, 1))
        assert rep.grid_gap_sup_offstrips <= rep.bound

    def test_bound_formula(self):
        # bound = omega_hat_f(2^-K) + span * 2^-M with the range span from the report
        f = get_target("swap2")
        _, rep = coding.compile(f, Box.cube(2), CodingParams(4, 4, 2, 2), measure=False)
        span = max(h - l for l, h in zip(rep.range_lo, rep.range_hi))
        omega = modulus_estimate(f, Box.cube(2), 2.0**-4)
        assert rep.bound == pytest.approx(omega + span * 2.0**-4, rel=1e-12)

    def test_deterministic(self):
        f = get_target("sine2")
        a, _ = coding.compile(f, Box.cube(2), CodingParams(3, 3, 2, 2), measure=False, seed=4)
        b, _ = coding.compile(f, Box.cube(2), CodingParams(3, 3, 2, 2), measure=False, seed=4)
        assert a.equals(b)

    def test_domain_dimension_check(self):
        with pytest.raises(ValueError):
            coding.compile(get_target("sine2"), Box.cube(1), CodingParams(3, 3, 2, 2))

    def test_report_serializable(self):
        import json

        _, rep = coding.compile(get_target("identity1"), Box.cube(1), CodingParams(3, 3))
        doc = json.loads(json.dumps(rep.to_dict()))
        for key in ("bound", "grid_gap_lp", "grid_gap_sup_offstrips", "gamma", "strips"):
            assert key in doc


@pytest.mark.parametrize("name", ["identity2", "swap2", "sine2", "sawtooth1", "const2"])
@pytest.mark.parametrize("K", [3, 4, 5, 6])
def test_coding_scheme_bound(name, K):
    f = get_target(name)
    box = Box.cube(f.dx)
    p = CodingParams(K, K, f.dx, f.dy)
    pts = 100 if f.dx == 2 else 10_000
    gap = sup_norm_gap(lambda x: coding_scheme_exact(x, f, p), f, box, pts)
    bound = accuracy_bound(lambda r: modulus_estimate(f, box, r), K, K)
    assert gap <= bound * (1 + 1e-9)
