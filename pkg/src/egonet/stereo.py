"""Scanline stereo matching and pinhole triangulation.

Disparity is estimated per scanline with a three-state dynamic program
(match / left-occluded / right-occluded) using absolute-difference match
costs and a constant occlusion penalty. The labeling returned for each
row attains the minimum total cost; ties resolve deterministically with
matches preferred over occlusions, which settles degenerate textureless
rows at the smallest disparity.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kv import read_kv, write_kv

DEFAULT_OCCLUSION_COST = 0.04


@dataclass(frozen=True)
class StereoCalib:
    """Pinhole stereo rig: focal length in pixels, metric baseline,
    camera height above ground, downward pitch, principal point."""

    focal_px: float
    baseline_m: float = 0.1
    camera_height_m: float = 1.4
    pitch_rad: float = 0.0
    principal_point: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.focal_px <= 0:
            raise ValueError(f"focal_px must be positive, got {self.focal_px}")
        if self.baseline_m <= 0:
            raise ValueError(f"baseline_m must be positive, got {self.baseline_m}")
        if self.camera_height_m < 0:
            raise ValueError(f"camera_height_m must be >= 0, got {self.camera_height_m}")

    def to_dict(self):
        cx, cy = self.principal_point
        return {"focal_px": self.focal_px, "baseline_m": self.baseline_m,
                "camera_height_m": self.camera_height_m, "pitch_rad": self.pitch_rad,
                "cx": cx, "cy": cy}

    @classmethod
    def from_dict(cls, d):
        return cls(focal_px=float(d["focal_px"]), baseline_m=float(d["baseline_m"]),
                   camera_height_m=float(d["camera_height_m"]),
                   pitch_rad=float(d.get("pitch_rad", 0.0)),
                   principal_point=(float(d["cx"]), float(d["cy"])))

    def save(self, path):
        write_kv(path, self.to_dict())

    @classmethod
    def load(cls, path):
        return cls.from_dict(read_kv(path))


def scanline_disparity_dp(left, right, max_disp, occlusion_cost=DEFAULT_OCCLUSION_COST):
    """Disparity for a rectified pair via per-row dynamic programming.

    Returns (disparity, valid): occluded pixels carry -1 and are flagged
    invalid. Matched pixel x in the left image corresponds to x - d in
    the right image with match cost |left(x) - right(x - d)|.
    """
    left = np.ascontiguousarray(left, dtype=np.float64)
    right = np.ascontiguousarray(right, dtype=np.float64)
    if left.shape != right.shape:
        raise ValueError(f"stereo pair size mismatch: {left.shape} vs {right.shape}")
    if left.ndim != 2:
        raise ValueError(f"expected 2D grayscale images, got shape {left.shape}")
    H, W = left.shape
    if max_disp < 1:
        raise ValueError(f"max_disp must be >= 1, got {max_disp}")
    if max_disp >= W:
        raise ValueError(f"max_disp {max_disp} must be smaller than image width {W}")
    disp = np.full((H, W), -1, dtype=np.int32)
    valid = np.zeros((H, W), dtype=np.bool_)
    costs = np.zeros(H, dtype=np.float64)
    _kernels.scanline_dp_image(left, right, max_disp, float(occlusion_cost),
                               disp, valid, costs)
    return disp.astype(np.float64), valid


def scanline_dp_cost(left_row, right_row, max_disp, occlusion_cost=DEFAULT_OCCLUSION_COST):
    """Optimal alignment cost of a single scanline pair (for verification)."""
    left_row = np.ascontiguousarray(left_row, dtype=np.float64)
    right_row = np.ascontiguousarray(right_row, dtype=np.float64)
    disp = np.full(left_row.shape[0], -1, dtype=np.int32)
    valid = np.zeros(left_row.shape[0], dtype=np.bool_)
    return _kernels.scanline_dp_row(left_row, right_row, max_disp,
                                    float(occlusion_cost), disp, valid)


def disparity_to_depth(disp, valid, calib):
    """Triangulate: Z = focal * baseline / disparity.

    Non-positive or invalid disparities produce invalid depth (0 with the
    mask cleared; depth is never encoded as a bare 0 without the mask).
    """
    disp = np.asarray(disp, dtype=np.float64)
    ok = np.asarray(valid, dtype=bool) & (disp > 0)
    depth = np.zeros_like(disp)
    np.divide(calib.focal_px * calib.baseline_m, disp, out=depth, where=ok)
    depth[~ok] = 0.0
    return depth, ok


def depth_to_disparity(depth, valid, calib):
    """Inverse of :func:`disparity_to_depth` (synthetic data, round trips)."""
    depth = np.asarray(depth, dtype=np.float64)
    ok = np.asarray(valid, dtype=bool) & (depth > 0)
    disp = np.zeros_like(depth)
    np.divide(calib.focal_px * calib.baseline_m, depth, out=disp, where=ok)
    disp[~ok] = 0.0
    return disp, ok
