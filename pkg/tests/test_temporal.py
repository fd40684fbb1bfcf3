from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixtconv import temporal
from mixtconv.errors import InvalidKernel, InvalidPartition, InvalidShape
from mixtconv.temporal import (
    MixTConvConfig,
    MixTConvSpec,
    ShiftSpec,
    depthwise_conv1d_backward,
    depthwise_conv1d_forward,
    mixtconv_backward,
    mixtconv_forward,
    ordinary_conv1d_forward,
    partition_channels,
    shift_as_mixtconv,
    shift_forward,
)
from mixtconv.verify import oracles


def fiber(values):
    return np.asarray(values, dtype=np.float64).reshape(1, 1, -1)


def video_from_fibers(*fibers):
    """[1, T, C, 1, 1] video whose channel c holds fibers[c]."""
    return np.asarray(fibers, dtype=np.float64).T.reshape(1, len(fibers[0]), len(fibers), 1, 1)


class TestPartition:
    def test_equal(self):
        assert partition_channels(64, 4) == [16, 16, 16, 16]

    def test_remainder_to_earliest(self):
        assert partition_channels(10, 4) == [3, 3, 2, 2]

    def test_too_few_channels(self):
        with pytest.raises(InvalidPartition):
            partition_channels(3, 4)

    @given(st.integers(1, 300), st.integers(1, 8))
    def test_sums_and_balance(self, C, g):
        if C < g:
            return
        split = partition_channels(C, g)
        assert sum(split) == C and len(split) == g
        assert max(split) - min(split) <= 1
        assert split == sorted(split, reverse=True)


class TestDepthwise:
    @pytest.mark.parametrize(
        "w, d, expected",
        [
            ([0, 1, 0], 1, [1, 2, 3, 4]),
            ([1, 0, 0], 1, [0, 1, 2, 3]),
            ([1, 1, 1], 1, [3, 6, 9, 7]),
            # frozen from naive_depthwise_conv1d
            ([1, 0, 1], 2, [3, 4, 1, 2]),
        ],
    )
    def test_examples(self, w, d, expected):
        out = depthwise_conv1d_forward(fiber([1, 2, 3, 4]), np.array([w], float), d)
        np.testing.assert_array_equal(out.ravel(), expected)

    def test_even_kernel(self):
        with pytest.raises(InvalidKernel):
            depthwise_conv1d_forward(fiber([1, 2, 3]), np.ones((1, 2)))

    def test_weight_shape_mismatch(self):
        with pytest.raises(InvalidShape):
            depthwise_conv1d_forward(np.zeros((1, 2, 4)), np.ones((3, 3)))

    def test_dilation_beyond_length_reads_zeros(self):
        out = depthwise_conv1d_forward(fiber([1, 2]), np.array([[5.0, 1.0, 7.0]]), dilation=3)
        np.testing.assert_array_equal(out.ravel(), [1, 2])

    def test_backward_pointwise(self, rng):
        x = rng.standard_normal((3, 2, 5))
        w = rng.standard_normal((2, 1))
        dz = rng.standard_normal(x.shape)
        dx, dw = depthwise_conv1d_backward(x, w, dz)
        np.testing.assert_allclose(dx, w[None, :, :] * dz)
        np.testing.assert_allclose(dw[:, 0], (x * dz).sum(axis=(0, 2)))

    def test_matches_oracle(self, rng):
        for _ in range(20):
            c, T = rng.integers(1, 6, size=2)
            k = int(rng.choice([1, 3, 5, 7]))
            d = int(rng.integers(1, 4))
            x = rng.standard_normal((2, c, T))
            w = rng.standard_normal((c, k))
            np.testing.assert_allclose(
                depthwise_conv1d_forward(x, w, d), oracles.naive_depthwise_conv1d(x, w, d), atol=1e-12
            )


class TestMixTConvForward:
    def test_identity_init_is_noop(self, rng):
        F = rng.standard_normal((2, 8, 16, 3, 3)).astype(np.float32)
        spec = MixTConvConfig((1, 3, 5, 7), init="identity").build(16)
        np.testing.assert_array_equal(mixtconv_forward(F, spec), F)

    def test_two_groups_example(self):
        F = video_from_fibers([1, 2, 3, 4], [1, 2, 3, 4])
        spec = MixTConvSpec((1, 3), (1, 1), (1, 1), [np.array([[2.0]]), np.array([[1.0, 1.0, 1.0]])])
        out = mixtconv_forward(F, spec)
        np.testing.assert_array_equal(out[0, :, 0, 0, 0], [2, 4, 6, 8])
        np.testing.assert_array_equal(out[0, :, 1, 0, 0], [3, 6, 9, 7])

    def test_shift_spec_example(self, rng):
        F = rng.standard_normal((2, 8, 8, 2, 2)).astype(np.float32)
        spec = MixTConvSpec(
            (3, 3, 3), (1, 1, 1), (1, 1, 6),
            [np.array([[1.0, 0, 0]]), np.array([[0, 0, 1.0]]), np.tile([0, 1.0, 0], (6, 1))],
        )
        diff = np.abs(mixtconv_forward(F, spec) - shift_forward(F))
        assert diff.max() <= 1e-6

    def test_split_mismatch(self):
        spec = MixTConvConfig((3,)).build(4)
        with pytest.raises(InvalidShape):
            mixtconv_forward(np.zeros((1, 4, 5, 1, 1)), spec)

    def test_rank_check(self):
        with pytest.raises(InvalidShape):
            mixtconv_forward(np.zeros((4, 5, 1, 1)), MixTConvConfig((3,)).build(5))

    @settings(max_examples=30, deadline=None)
    @given(
        st.sampled_from([(1, 3, 5, 7), (3,), (1, 3), (3, 3, 3)]),
        st.integers(4, 16),
        st.integers(1, 8),
        st.integers(0, 2**31),
    )
    def test_shape_preserved_and_linear(self, ks, C, T, seed):
        rng = np.random.default_rng(seed)
        spec = MixTConvConfig(ks, init="uniform").build(C, rng=rng, dtype=np.float64)
        F1, F2 = rng.standard_normal((2, 1, T, C, 2, 2))
        a, b = rng.standard_normal(2)
        lhs = mixtconv_forward(a * F1 + b * F2, spec)
        rhs = a * mixtconv_forward(F1, spec) + b * mixtconv_forward(F2, spec)
        assert lhs.shape == F1.shape
        np.testing.assert_allclose(lhs, rhs, rtol=1e-5, atol=1e-12)

    def test_kernel_sizes_ascend_with_channel(self):
        spec = MixTConvConfig((1, 3, 5, 7)).build(10)
        assert spec.channel_split == (3, 3, 2, 2)
        assert [w.shape for w in spec.weights] == [(3, 1), (3, 3), (2, 5), (2, 7)]


class TestMixTConvBackward:
    def test_pointwise_group(self, rng):
        F = rng.standard_normal((2, 4, 3, 2, 2))
        w = rng.standard_normal((3, 1))
        spec = MixTConvSpec((1,), (1,), (3,), [w])
        dZ = rng.standard_normal(F.shape)
        dF, (dW,) = mixtconv_backward(F, spec, dZ)
        np.testing.assert_allclose(dF, w[:, 0][None, None, :, None, None] * dZ)
        np.testing.assert_allclose(dW[:, 0], (F * dZ).sum(axis=(0, 1, 3, 4)))

    def test_zero_upstream(self, rng):
        F = rng.standard_normal((1, 6, 8, 2, 2))
        spec = MixTConvConfig((1, 3, 5, 7), init="uniform").build(8, rng=rng)
        dF, dW = mixtconv_backward(F, spec, np.zeros_like(F))
        assert not dF.any() and not any(w.any() for w in dW)

    def test_adjoint_identity(self, rng):
        # <Z(F), dZ> == <F, dF>: the input gradient is the transpose of the forward map
        F = rng.standard_normal((2, 7, 12, 2, 3))
        spec = MixTConvConfig((1, 3, 5, 7), (1, 2, 1, 2), "uniform").build(12, rng=rng, dtype=np.float64)
        dZ = rng.standard_normal(F.shape)
        dF, dW = mixtconv_backward(F, spec, dZ)
        np.testing.assert_allclose(np.sum(mixtconv_forward(F, spec) * dZ), np.sum(F * dF), rtol=1e-12)
        # forward is also linear in the weights, so <Z, dZ> == sum_m <W_m, dW_m>
        np.testing.assert_allclose(
            np.sum(mixtconv_forward(F, spec) * dZ), sum(np.sum(w * g) for w, g in zip(spec.weights, dW)), rtol=1e-12
        )

    def test_shape_mismatch(self):
        spec = MixTConvConfig((3,)).build(2)
        with pytest.raises(InvalidShape):
            mixtconv_backward(np.zeros((1, 3, 2, 1, 1)), spec, np.zeros((1, 4, 2, 1, 1)))


class TestShift:
    def test_default_counts(self):
        assert ShiftSpec().channel_counts(8) == (1, 1, 6)
        assert ShiftSpec().channel_counts(64) == (8, 8, 48)

    def test_counts_round_down(self):
        assert ShiftSpec().channel_counts(12) == (1, 1, 10)

    def test_backward_channel(self):
        out = shift_forward(video_from_fibers(*([[1, 2, 3, 4]] * 8)))
        np.testing.assert_array_equal(out[0, :, 0, 0, 0], [0, 1, 2, 3])
        np.testing.assert_array_equal(out[0, :, 1, 0, 0], [2, 3, 4, 0])
        np.testing.assert_array_equal(out[0, :, 2, 0, 0], [1, 2, 3, 4])

    def test_single_frame(self, rng):
        F = rng.standard_normal((1, 1, 8, 2, 2))
        out = shift_forward(F)
        assert not out[:, :, :2].any()
        np.testing.assert_array_equal(out[:, :, 2:], F[:, :, 2:])

    def test_invalid_fractions(self):
        with pytest.raises(InvalidPartition):
            ShiftSpec(Fraction(3, 4), Fraction(1, 2))

    @pytest.mark.parametrize("C", [8, 16, 64, 256])
    def test_equivalent_to_fixed_mixtconv(self, rng, C):
        F = rng.standard_normal((2, 8, C, 2, 2)).astype(np.float32)
        out = mixtconv_forward(F, shift_as_mixtconv(C))
        assert np.abs(out - shift_forward(F)).max() <= 1e-6

    def test_backward_is_adjoint(self, rng):
        F = rng.standard_normal((1, 5, 16, 2, 2))
        dZ = rng.standard_normal(F.shape)
        np.testing.assert_allclose(np.sum(shift_forward(F) * dZ), np.sum(F * temporal.shift_backward(dZ)))


class TestOrdinary:
    def test_reduces_to_depthwise(self, rng):
        F = rng.standard_normal((2, 6, 1, 2, 2))
        w = rng.standard_normal((1, 5))
        out = ordinary_conv1d_forward(F, w[None])
        ref = mixtconv_forward(F, MixTConvSpec((5,), (1,), (1,), [w]))
        np.testing.assert_allclose(out, ref, atol=1e-12)

    def test_identity(self, rng):
        F = rng.standard_normal((1, 4, 3, 2, 2))
        W = np.zeros((3, 3, 3))
        W[:, :, 1] = np.eye(3)
        np.testing.assert_allclose(ordinary_conv1d_forward(F, W), F)

    def test_channel_sum_example(self):
        F = np.array([[1.0, 3.0], [2.0, 4.0]]).reshape(1, 2, 2, 1, 1)  # channel 0: [1,2], channel 1: [3,4]
        out = ordinary_conv1d_forward(F, np.ones((1, 2, 1)))
        np.testing.assert_array_equal(out.ravel(), [4, 6])

    def test_channel_mismatch(self):
        with pytest.raises(InvalidShape):
            ordinary_conv1d_forward(np.zeros((1, 2, 3, 1, 1)), np.zeros((3, 2, 3)))


class TestConfig:
    def test_parse_round_trip(self):
        cfg = MixTConvConfig.parse("ks=1,3,5,7;dil=1,1,1,1;init=identity")
        assert cfg.kernel_sizes == (1, 3, 5, 7) and cfg.dilations == (1, 1, 1, 1)
        assert MixTConvConfig.parse(str(cfg)) == cfg

    def test_dilated_default(self):
        cfg = MixTConvConfig.parse("ks=3,3,3;dil=1,2,3")
        assert cfg.dilations == (1, 2, 3) and cfg.init == "identity"

    @pytest.mark.parametrize("text", ["ks=2,4", "ks=3;dil=0", "ks=3,5;dil=1", "ks=a"])
    def test_invalid(self, text):
        with pytest.raises(InvalidKernel):
            MixTConvConfig.parse(text)

    def test_unknown_field(self):
        with pytest.raises(ValueError):
            MixTConvConfig.parse("ks=3;foo=1")

    def test_uniform_init_range_and_seed(self):
        a = MixTConvConfig((3, 7), init="uniform").build(8, rng=np.random.default_rng(5))
        b = MixTConvConfig((3, 7), init="uniform").build(8, rng=np.random.default_rng(5))
        for wa, wb, k in zip(a.weights, b.weights, (3, 7)):
            np.testing.assert_array_equal(wa, wb)
            assert np.abs(wa).max() <= np.sqrt(1 / k)
