"""Scanline DP against exhaustive alignment enumeration, plus the
triangulation contracts."""

import numpy as np
import pytest

from egonet.stereo import (StereoCalib, depth_to_disparity, disparity_to_depth,
                           scanline_disparity_dp, scanline_dp_cost)

OCC = 0.04


def brute_force_min_cost(left, right, max_disp, occ=OCC):
    """Enumerate every monotone alignment path (match / left-occ /
    right-occ) with disparity in [0, max_disp]."""
    W = len(left)
    best = [np.inf]

    def go(i, j, cost):
        if cost >= best[0]:
            return
        if i == W and j == W:
            best[0] = cost
            return
        d = i - j
        if i < W and j < W and 0 <= d <= max_disp:
            go(i + 1, j + 1, cost + abs(left[i] - right[j]))
        if i < W and d + 1 <= max_disp:
            go(i + 1, j, cost + occ)
        if j < W and d - 1 >= 0:
            go(i, j + 1, cost + occ)

    go(0, 0, 0.0)
    return best[0]


def planted_shift_rows(rng, width, shift):
    """right(y) = left(y + shift): left pixel x >= shift matches x - shift."""
    left = rng.permutation(width).astype(np.float64) / width
    right = np.empty(width)
    right[:width - shift] = left[shift:]
    right[width - shift:] = rng.random(shift) + 2.0  # garbage, never matches
    return left, right


class TestScanlineDP:
    def test_identical_rows_zero_disparity(self, rng):
        row = rng.random((4, 16))
        disp, valid = scanline_disparity_dp(row, row, max_disp=4)
        assert np.all(valid)
        assert np.all(disp == 0)

    def test_planted_shift_recovered(self, rng):
        left, right = planted_shift_rows(rng, 12, 3)
        disp, valid = scanline_disparity_dp(left[None], right[None], max_disp=4)
        assert np.all(disp[0, 3:] == 3)
        assert np.all(valid[0, 3:])
        assert not np.any(valid[0, :3])  # occluded head of the row
        # optimum equals brute force on this short row
        cost = scanline_dp_cost(left, right, 4)
        assert abs(cost - brute_force_min_cost(left, right, 4)) < 1e-12

    def test_uniform_row_resolves_to_smallest_disparity(self):
        row = np.full((1, 10), 0.5)
        disp, valid = scanline_disparity_dp(row, row, max_disp=3)
        assert np.all(disp == 0) and np.all(valid)

    def test_max_disp_must_be_smaller_than_width(self):
        row = np.zeros((1, 8))
        with pytest.raises(ValueError, match="width"):
            scanline_disparity_dp(row, row, max_disp=8)
        with pytest.raises(ValueError):
            scanline_disparity_dp(row, row, max_disp=0)

    def test_size_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            scanline_disparity_dp(np.zeros((2, 8)), np.zeros((2, 9)), 2)

    def test_dp_cost_equals_brute_force_on_short_rows(self):
        rng = np.random.default_rng(42)
        for trial in range(40):
            width = int(rng.integers(4, 13))
            max_disp = int(rng.integers(1, min(5, width)))
            left = rng.random(width)
            if trial % 2:
                right = rng.random(width)  # unrelated rows
            else:
                shift = int(rng.integers(0, max_disp + 1))
                left, right = planted_shift_rows(rng, width, shift) if shift else (left, left.copy())
            got = scanline_dp_cost(left, right, max_disp)
            want = brute_force_min_cost(left, right, max_disp)
            assert abs(got - want) < 1e-12, (trial, width, max_disp)


class TestTriangulation:
    calib = StereoCalib(focal_px=1000.0, baseline_m=0.1, camera_height_m=1.0,
                        principal_point=(4.5, 4.5))

    def test_z_equals_fb_over_d(self):
        disp = np.array([[50.0]])
        depth, ok = disparity_to_depth(disp, np.array([[True]]), self.calib)
        assert ok[0, 0]
        assert depth[0, 0] == pytest.approx(2.0, abs=0)

    def test_invalid_propagates(self):
        depth, ok = disparity_to_depth(np.array([[50.0]]), np.array([[False]]), self.calib)
        assert not ok[0, 0] and depth[0, 0] == 0.0
        depth, ok = disparity_to_depth(np.array([[0.0]]), np.array([[True]]), self.calib)
        assert not ok[0, 0]

    def test_inverse_proportionality(self):
        d = np.array([[10.0, 20.0]])
        depth, _ = disparity_to_depth(d, np.ones((1, 2), bool), self.calib)
        assert depth[0, 0] == pytest.approx(2 * depth[0, 1], rel=1e-15)

    def test_round_trip_exact(self, rng):
        depth = rng.uniform(0.3, 8.0, (16, 16))
        valid = np.ones_like(depth, dtype=bool)
        disp, _ = depth_to_disparity(depth, valid, self.calib)
        back, ok = disparity_to_depth(disp, valid, self.calib)
        assert np.all(ok)
        np.testing.assert_allclose(back, depth, rtol=1e-9)

    def test_calib_validation(self):
        with pytest.raises(ValueError):
            StereoCalib(focal_px=0.0)
        with pytest.raises(ValueError):
            StereoCalib(focal_px=10, baseline_m=-1)

    def test_calib_text_round_trip(self, tmp_path):
        c = StereoCalib(focal_px=40.0, baseline_m=0.1, camera_height_m=1.45,
                        pitch_rad=0.52, principal_point=(31.5, 31.5))
        path = tmp_path / "calib.txt"
        c.save(path)
        assert StereoCalib.load(path) == c
