"""Forward-operator contracts: shapes, values, and documented edge cases."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from egonet import tensor as T


def t(arr, **kw):
    return T.Tensor(np.asarray(arr, dtype=np.float64), **kw)


class TestConv2d:
    def test_scalar_scaling(self):
        y = T.conv2d(t(np.ones((1, 1, 3, 3))), t(np.full((1, 1, 1, 1), 2.0)), t([0.0]))
        assert np.array_equal(y.data, np.full((1, 1, 3, 3), 2.0))

    def test_hand_oracle_2x2(self):
        x = t([[[[1.0, 2.0], [3.0, 4.0]]]])
        w = t([[[[1.0, 0.0], [0.0, 1.0]]]])
        y = T.conv2d(x, w, t([0.0]))
        assert y.data.shape == (1, 1, 1, 1)
        assert y.data.item() == 5.0

    def test_dilated_shape(self):
        y = T.conv2d(t(np.zeros((1, 1, 5, 5))), t(np.zeros((1, 1, 3, 3))), t([0.0]),
                     stride=1, pad=2, dilation=2)
        assert y.data.shape == (1, 1, 5, 5)

    def test_channel_mismatch_names_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(1, 2, 4, 4\).*\(3, 3, 2, 2\)"):
            T.conv2d(t(np.zeros((1, 2, 4, 4))), t(np.zeros((3, 3, 2, 2))), t(np.zeros(3)))

    def test_floor_output_size(self):
        # 5 -> (5 - 2) // 2 + 1 = 2 with stride 2: floor, not an error
        y = T.conv2d(t(np.zeros((1, 1, 5, 5))), t(np.zeros((1, 1, 2, 2))), t([0.0]), stride=2)
        assert y.data.shape == (1, 1, 2, 2)

    def test_invalid_hyperparameters(self):
        x, w, b = t(np.zeros((1, 1, 4, 4))), t(np.zeros((1, 1, 2, 2))), t([0.0])
        for kw in ({"stride": 0}, {"dilation": 0}, {"pad": -1}):
            with pytest.raises(ValueError):
                T.conv2d(x, w, b, **kw)

    @given(st.integers(1, 3), st.integers(1, 3), st.integers(4, 9), st.integers(4, 9),
           st.integers(1, 3), st.integers(1, 2), st.integers(0, 2), st.integers(1, 2))
    @settings(max_examples=60, deadline=None)
    def test_shape_formula(self, c, o, h, w, k, stride, pad, dil):
        oh = (h + 2 * pad - dil * (k - 1) - 1) // stride + 1
        ow = (w + 2 * pad - dil * (k - 1) - 1) // stride + 1
        x = t(np.zeros((1, c, h, w)))
        wt = t(np.zeros((o, c, k, k)))
        if oh < 1 or ow < 1:
            with pytest.raises(ValueError):
                T.conv2d(x, wt, t(np.zeros(o)), stride=stride, pad=pad, dilation=dil)
        else:
            y = T.conv2d(x, wt, t(np.zeros(o)), stride=stride, pad=pad, dilation=dil)
            assert y.data.shape == (1, o, oh, ow)


class TestEltwiseAndPool:
    def test_relu_values(self):
        y = T.relu(t([-1.0, 0.0, 2.0]))
        assert np.array_equal(y.data, [0.0, 0.0, 2.0])

    def test_maxpool_window_max(self):
        y = T.maxpool2d(t([[[[1.0, 2.0], [3.0, 4.0]]]]), k=2, stride=2)
        assert y.data.reshape(()) == 4.0

    def test_maxpool_shape_formula(self):
        y = T.maxpool2d(t(np.zeros((2, 3, 7, 9))), k=3, stride=2, pad=1)
        assert y.data.shape == (2, 3, 4, 5)

    def test_maxpool_neg_inf_padding(self):
        # all-negative input: padding must never win the window max
        x = t(-np.arange(1, 17, dtype=np.float64).reshape(1, 1, 4, 4))
        y = T.maxpool2d(x, k=3, stride=2, pad=1)
        assert np.all(np.isfinite(y.data))
        assert y.data[0, 0, 0, 0] == -1.0

    def test_concat_order_and_shapes(self):
        a = t(np.full((1, 2, 3, 3), 1.0))
        b = t(np.full((1, 3, 3, 3), 2.0))
        y = T.concat_channels([a, b])
        assert y.data.shape == (1, 5, 3, 3)
        assert np.all(y.data[:, :2] == 1.0) and np.all(y.data[:, 2:] == 2.0)

    def test_concat_empty_rejected(self):
        with pytest.raises(ValueError):
            T.concat_channels([])

    def test_concat_mismatch_rejected(self):
        with pytest.raises(ValueError):
            T.concat_channels([t(np.zeros((1, 2, 3, 3))), t(np.zeros((1, 2, 4, 3)))])


class TestDropout:
    def test_rate_zero_identity_both_modes(self, rng):
        x = t(rng.standard_normal((4, 5)))
        for training in (True, False):
            y = T.dropout(x, 0.0, training, rng)
            assert np.array_equal(y.data, x.data)

    def test_inference_identity(self, rng):
        x = t(rng.standard_normal((4, 5)))
        y = T.dropout(x, 0.5, False, rng)
        assert np.array_equal(y.data, x.data)

    def test_inverted_scaling_mean(self):
        rng = np.random.default_rng(99)
        x = t(np.ones(100_000))
        y = T.dropout(x, 0.5, True, rng)
        assert abs(y.data.mean() - 1.0) < 0.01

    def test_seeded_masks_bit_identical(self):
        x = t(np.ones((64, 64)))
        a = T.dropout(x, 0.3, True, np.random.default_rng(7)).data
        b = T.dropout(x, 0.3, True, np.random.default_rng(7)).data
        assert np.array_equal(a, b)

    def test_bad_rate(self, rng):
        with pytest.raises(ValueError):
            T.dropout(t([1.0]), 1.0, True, rng)


class TestBilinearUpsample:
    def test_factor_one_identity(self, rng):
        x = t(rng.standard_normal((1, 2, 3, 3)))
        assert np.array_equal(T.bilinear_upsample(x, 1).data, x.data)

    def test_align_corners_thirds(self):
        x = t([[[[0.0, 1.0], [0.0, 1.0]]]])
        y = T.bilinear_upsample(x, 2)
        expect = np.array([0.0, 1 / 3, 2 / 3, 1.0])
        for row in y.data[0, 0]:
            np.testing.assert_allclose(row, expect, atol=1e-15)

    def test_corners_exact(self, rng):
        x = t(rng.standard_normal((1, 1, 4, 5)))
        y = T.bilinear_upsample(x, 8).data
        assert y[0, 0, 0, 0] == x.data[0, 0, 0, 0]
        assert y[0, 0, -1, -1] == x.data[0, 0, -1, -1]
        assert y[0, 0, 0, -1] == x.data[0, 0, 0, -1]

    def test_constant_stays_constant(self):
        y = T.bilinear_upsample(t(np.full((1, 1, 3, 4), 2.5)), 4)
        np.testing.assert_allclose(y.data, 2.5, atol=1e-15)


class TestPixelSoftmaxLoss:
    def test_equal_logits_ln2(self):
        loss, probs = T.pixel_softmax_loss(t(np.zeros((1, 2, 2, 2))),
                                           np.zeros((1, 2, 2), dtype=int))
        assert abs(loss.data.item() - np.log(2)) < 1e-12
        np.testing.assert_allclose(probs, 0.5)

    def test_single_pixel_arithmetic(self):
        logits = t(np.array([2.0, 0.0]).reshape(1, 2, 1, 1))
        loss, probs = T.pixel_softmax_loss(logits, np.array([[[0]]]))
        p0 = np.exp(2) / (np.exp(2) + 1)
        assert abs(probs[0, 0, 0, 0] - p0) < 1e-15
        assert abs(loss.data.item() + np.log(p0)) < 1e-12

    def test_shift_invariance(self, rng):
        z = rng.standard_normal((1, 2, 3, 3))
        labels = rng.integers(0, 2, (1, 3, 3))
        l1, p1 = T.pixel_softmax_loss(t(z), labels)
        l2, p2 = T.pixel_softmax_loss(t(z + 1000.0), labels)
        np.testing.assert_allclose(p1, p2, atol=1e-12)
        assert abs(l1.data.item() - l2.data.item()) < 1e-9

    def test_out_of_range_label_rejected(self):
        with pytest.raises(ValueError, match="labels"):
            T.pixel_softmax_loss(t(np.zeros((1, 2, 1, 1))), np.array([[[2]]]))

    def test_extreme_logits_stay_finite(self):
        logits = t(np.array([800.0, -800.0]).reshape(1, 2, 1, 1))
        loss, probs = T.pixel_softmax_loss(logits, np.array([[[1]]]))
        assert np.isfinite(loss.data.item())
        assert np.all(np.isfinite(probs))


class TestFiniteness:
    @given(st.integers(0, 3))
    @settings(max_examples=4, deadline=None)
    def test_ops_finite_on_finite_inputs(self, seed):
        rng = np.random.default_rng(seed)
        x = t(rng.standard_normal((2, 3, 8, 8)) * 10)
        w = t(rng.standard_normal((4, 3, 3, 3)))
        b = t(rng.standard_normal(4))
        y = T.conv2d(x, w, b, pad=1)
        y = T.relu(y)
        y = T.maxpool2d(y, 2)
        y = T.bilinear_upsample(y, 2)
        assert np.all(np.isfinite(y.data))


def test_dump_csv_round_trip(tmp_path):
    arr = np.arange(6.0).reshape(2, 3)
    path = tmp_path / "t.csv"
    T.dump_csv(T.Tensor(arr), path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "i0,i1,value"
    assert len(lines) == 7
    assert lines[1].startswith("0,0,")


def test_default_dtype_switch():
    try:
        T.set_default_dtype(np.float32)
        assert T.Tensor(np.zeros(3)).data.dtype == np.float32
    finally:
        T.set_default_dtype(np.float64)
    assert T.Tensor(np.zeros(3)).data.dtype == np.float64
    with pytest.raises(ValueError):
        T.set_default_dtype(np.int32)
