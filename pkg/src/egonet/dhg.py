"""DHG image construction: normalized depth, height above ground, grayscale.

Height comes from back-projecting each pixel through the calibrated
camera, rotating by the downward pitch so gravity is vertical, and
measuring against a ground plane directly below the camera. Channels are
scaled into [0, 1] with fixed per-dataset bounds so absolute distances
keep their meaning across frames; pixels without a valid depth get a 0
sentinel in the D and H channels plus a separate invalidity mask.
"""

import math
from dataclasses import dataclass

import numpy as np

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class DhgBounds:
    """Fixed normalization ranges for the depth and height channels."""

    z_min: float = 0.3
    z_max: float = 8.0
    h_min: float = -0.5
    h_max: float = 2.5

    def __post_init__(self):
        if not (self.z_min < self.z_max and self.h_min < self.h_max):
            raise ValueError(f"degenerate normalization bounds: {self}")

    def to_dict(self):
        return {"z_min": self.z_min, "z_max": self.z_max,
                "h_min": self.h_min, "h_max": self.h_max}

    @classmethod
    def from_dict(cls, d):
        return cls(z_min=float(d["z_min"]), z_max=float(d["z_max"]),
                   h_min=float(d["h_min"]), h_max=float(d["h_max"]))


def depth_to_height(depth, valid, calib, pitch_rad=None):
    """Per-pixel height above the ground plane, in meters.

    Back-projects (u, v, Z) to camera coordinates, rotates by the pitch
    about the horizontal axis, and subtracts from the camera height.
    ``pitch_rad`` overrides the calibration pitch (per-frame head pose).
    """
    depth = np.asarray(depth, dtype=np.float64)
    ok = np.asarray(valid, dtype=bool) & (depth > 0)
    H, W = depth.shape
    cx, cy = calib.principal_point
    theta = calib.pitch_rad if pitch_rad is None else pitch_rad
    v = np.arange(H, dtype=np.float64)[:, None]
    y_cam = (v - cy) * depth / calib.focal_px
    # World y points down; the ground sits camera_height_m below the camera.
    y_world = y_cam * math.cos(theta) + depth * math.sin(theta)
    height = calib.camera_height_m - y_world
    height[~ok] = 0.0
    return height, ok


def to_grayscale(rgb):
    """Rec. 601 luma from a 3 x H x W array in [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ValueError(f"expected 3 x H x W rgb array, got shape {rgb.shape}")
    r, g, b = LUMA_WEIGHTS
    return r * rgb[0] + g * rgb[1] + b * rgb[2]


def assemble_dhg(depth, height, gray, valid, bounds):
    """Stack normalized (depth, height, grayscale) channels.

    Returns (dhg, invalid_mask) where dhg is 3 x H x W in [0, 1] and
    invalid pixels carry 0 in the D and H channels.
    """
    depth = np.asarray(depth, dtype=np.float64)
    height = np.asarray(height, dtype=np.float64)
    gray = np.asarray(gray, dtype=np.float64)
    ok = np.asarray(valid, dtype=bool)
    if not (depth.shape == height.shape == gray.shape == ok.shape):
        raise ValueError(f"channel size mismatch: depth {depth.shape}, height {height.shape}, "
                         f"gray {gray.shape}, mask {ok.shape}")
    d = np.clip((depth - bounds.z_min) / (bounds.z_max - bounds.z_min), 0.0, 1.0)
    h = np.clip((height - bounds.h_min) / (bounds.h_max - bounds.h_min), 0.0, 1.0)
    d[~ok] = 0.0
    h[~ok] = 0.0
    return np.stack([d, h, gray]), ~ok


def dhg_to_depth(d_channel, invalid_mask, bounds):
    """Invert the depth-channel normalization (valid pixels only)."""
    z = bounds.z_min + np.asarray(d_channel, dtype=np.float64) * (bounds.z_max - bounds.z_min)
    z[np.asarray(invalid_mask, dtype=bool)] = 0.0
    return z
