"""Squeeze-and-excitation block: stage oracles, invariants, gradients."""

import numpy as np
import pytest

from lungnet.attention import (SEBlock, reduced_channels, se_excite, se_scale,
                               se_squeeze)
from lungnet.errors import ShapeError
from lungnet.gradcheck import gradient_check
from lungnet.rng import make_rng


class TestSqueeze:
    def test_channel_mean(self):
        u = np.array([1.0, 2.0, 3.0, 4.0], dtype=np.float32).reshape(1, 1, 2, 2)
        np.testing.assert_array_equal(se_squeeze(u), [[2.5]])

    def test_linearity(self, rng):
        u = rng.standard_normal((2, 3, 4, 4)).astype(np.float32)
        np.testing.assert_allclose(se_squeeze(2.0 * u), 2.0 * se_squeeze(u),
                                   atol=1e-6)

    def test_matches_double_loop_oracle(self, rng):
        u = rng.standard_normal((3, 5, 4, 4)).astype(np.float32)
        ref = np.zeros((3, 5))
        for n in range(3):
            for c in range(5):
                acc = 0.0
                for i in range(4):
                    for j in range(4):
                        acc += u[n, c, i, j]
                ref[n, c] = acc / 16.0
        np.testing.assert_allclose(se_squeeze(u), ref, atol=1e-6)

    def test_spatial_1x1_is_identity(self, rng):
        u = rng.standard_normal((2, 6, 1, 1)).astype(np.float32)
        np.testing.assert_array_equal(se_squeeze(u), u[:, :, 0, 0])

    def test_rank_check(self, rng):
        with pytest.raises(ShapeError):
            se_squeeze(rng.standard_normal((2, 3, 4)).astype(np.float32))


class TestExcite:
    def test_zero_input_gives_half(self):
        w1 = np.zeros((2, 8), dtype=np.float32) + 0.3
        w2 = np.zeros((8, 2), dtype=np.float32) + 0.7
        s = se_excite(np.zeros((3, 8), dtype=np.float32), w1, w2)
        np.testing.assert_allclose(s, np.full((3, 8), 0.5), atol=1e-7)

    def test_zero_first_weight_gives_half(self, rng):
        z = rng.standard_normal((2, 8)).astype(np.float32)
        w1 = np.zeros((2, 8), dtype=np.float32)
        w2 = rng.standard_normal((8, 2)).astype(np.float32)
        np.testing.assert_allclose(se_excite(z, w1, w2), 0.5, atol=1e-7)

    def test_matches_scalar_oracle(self, rng):
        z = rng.standard_normal((2, 6)).astype(np.float32)
        w1 = rng.standard_normal((3, 6)).astype(np.float32)
        w2 = rng.standard_normal((6, 3)).astype(np.float32)
        b1 = rng.standard_normal(3).astype(np.float32)
        b2 = rng.standard_normal(6).astype(np.float32)
        s = se_excite(z, w1, w2, b1, b2)
        ref = np.zeros((2, 6))
        for n in range(2):
            hidden = [max(0.0, float(z[n] @ w1[r]) + b1[r]) for r in range(3)]
            for c in range(6):
                a = sum(w2[c, r] * hidden[r] for r in range(3)) + b2[c]
                ref[n, c] = 1.0 / (1.0 + np.exp(-a))
        np.testing.assert_allclose(s, ref, atol=1e-6)

    def test_weight_shape_mismatch(self, rng):
        z = rng.standard_normal((2, 6)).astype(np.float32)
        w1 = rng.standard_normal((3, 5)).astype(np.float32)
        w2 = rng.standard_normal((6, 3)).astype(np.float32)
        with pytest.raises(ShapeError):
            se_excite(z, w1, w2)


class TestScale:
    def test_unit_gates_identity(self, rng):
        u = rng.standard_normal((2, 4, 3, 3)).astype(np.float32)
        out = se_scale(u, np.ones((2, 4), dtype=np.float32))
        np.testing.assert_array_equal(out, u)

    def test_zero_gates(self, rng):
        u = rng.standard_normal((2, 4, 3, 3)).astype(np.float32)
        assert not se_scale(u, np.zeros((2, 4), dtype=np.float32)).any()

    def test_matches_elementwise_oracle(self, rng):
        u = rng.standard_normal((2, 3, 4, 4)).astype(np.float32)
        s = rng.uniform(0, 1, (2, 3)).astype(np.float32)
        out = se_scale(u, s)
        for n in range(2):
            for c in range(3):
                for i in range(4):
                    for j in range(4):
                        assert out[n, c, i, j] == pytest.approx(
                            u[n, c, i, j] * s[n, c], abs=1e-6)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            se_scale(rng.standard_normal((2, 4, 3, 3)).astype(np.float32),
                     rng.standard_normal((2, 5)).astype(np.float32))


class TestSEBlock:
    def test_shape_preserved_over_random_shapes(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 4))
            c = int(rng.integers(1, 64))
            h = int(rng.integers(1, 12))
            w = int(rng.integers(1, 12))
            r = int(rng.choice([1, 2, 4, 16]))
            block = SEBlock(c, reduction=r, rng=make_rng(0))
            u = rng.standard_normal((n, c, h, w)).astype(np.float32)
            assert block.forward(u).shape == u.shape

    def test_reduced_dim_clamped(self):
        assert reduced_channels(32, 16) == 2
        assert reduced_channels(4, 16) == 1
        block = SEBlock(4, reduction=16)
        assert block.params["w1"].shape == (1, 4)

    def test_gates_bounded_and_attenuating(self, rng):
        block = SEBlock(8, reduction=2, rng=make_rng(1))
        u = (rng.standard_normal((3, 8, 5, 5)) * 4).astype(np.float32)
        out = block.forward(u)
        assert np.all(np.abs(out) <= np.abs(u))

    def test_composition_equals_pipeline_bit_exact(self, rng):
        block = SEBlock(6, reduction=2, rng=make_rng(2))
        u = rng.standard_normal((2, 6, 4, 4)).astype(np.float32)
        out = block.forward(u)
        p = block.params
        s = se_excite(se_squeeze(u), p["w1"], p["w2"], p["b1"], p["b2"])
        np.testing.assert_array_equal(out, se_scale(u, s))

    def test_fresh_block_biases_start_at_zero(self):
        block = SEBlock(8, reduction=4, rng=make_rng(3))
        assert not block.params["b1"].any()
        assert not block.params["b2"].any()
        assert block.params["w1"].shape == (2, 8)
        assert block.params["w2"].shape == (8, 2)

    def test_zero_grad_out_zeroes_all_gradients(self, rng):
        block = SEBlock(8, reduction=2, rng=make_rng(4))
        u = rng.standard_normal((2, 8, 3, 3)).astype(np.float32)
        out = block.forward(u)
        gu = block.backward(np.zeros_like(out))
        assert not gu.any()
        for g in block.grads.values():
            assert not g.any()

    def test_gradient_check_full_block(self, rng):
        block = SEBlock(4, reduction=2, rng=make_rng(5))
        mag = rng.uniform(0.05, 2.9, (2, 4, 3, 3))
        sign = rng.choice([-1.0, 1.0], (2, 4, 3, 3))
        u = (mag * sign).astype(np.float32)
        err = gradient_check(block, u, epsilon=1e-3, rng=make_rng(6))
        assert err < 1e-2

    def test_input_gradient_includes_squeeze_path(self, rng):
        """The gate depends on the input, so grad_U must exceed the pure
        scale-path term."""
        block = SEBlock(4, reduction=2, rng=make_rng(7))
        u = rng.standard_normal((1, 4, 3, 3)).astype(np.float32)
        out = block.forward(u)
        _, _, _, _, s = (block._cache or (None,) * 5)
        go = np.ones_like(out)
        gu = block.backward(go)
        scale_only = go * s[:, :, None, None]
        assert not np.allclose(gu, scale_only)
