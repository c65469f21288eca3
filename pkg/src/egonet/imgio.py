"""Image file I/O: 8-bit PNGs, 16-bit millimeter depth PNGs, and PFM.

Depth PNGs store millimeters as uint16 with 0 meaning "no depth"; PFM
stores float32 meters (non-positive values are invalid), rows bottom-up
per the format convention.
"""

import numpy as np
from PIL import Image


def write_png_u8(path, arr):
    """8-bit grayscale (H x W) or RGB (H x W x 3) PNG."""
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise ValueError(f"expected uint8 image, got {arr.dtype}")
    Image.fromarray(arr).save(path)


def read_png_u8(path):
    img = Image.open(path)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB" if len(img.getbands()) >= 3 else "L")
    return np.asarray(img, dtype=np.uint8)


def write_depth_png16(path, depth_m, valid=None):
    """Quantize metric depth to whole millimeters (0 marks invalid)."""
    depth_m = np.asarray(depth_m, dtype=np.float64)
    mm = np.rint(depth_m * 1000.0)
    mm = np.clip(mm, 0, 65535).astype(np.uint16)
    if valid is not None:
        mm[~np.asarray(valid, dtype=bool)] = 0
    Image.fromarray(mm).save(path)


def read_depth_png16(path):
    mm = np.asarray(Image.open(path), dtype=np.uint16)
    depth = mm.astype(np.float64) / 1000.0
    valid = mm > 0
    depth[~valid] = 0.0
    return depth, valid


def write_pfm(path, data):
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError(f"PFM writer expects a 2D map, got shape {data.shape}")
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{data.shape[1]} {data.shape[0]}\n".encode())
        fh.write(b"-1.0\n")  # little-endian scale
        fh.write(data[::-1].tobytes())


def read_pfm(path):
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header != b"Pf":
            raise ValueError(f"{path}: not a grayscale PFM file (header {header!r})")
        w, h = map(int, fh.readline().split())
        scale = float(fh.readline())
        data = np.frombuffer(fh.read(w * h * 4), dtype="<f4" if scale < 0 else ">f4")
        if data.size != w * h:
            raise ValueError(f"{path}: truncated PFM payload")
    return data.reshape(h, w)[::-1].astype(np.float64)


def read_depth_pfm(path):
    depth = read_pfm(path)
    valid = depth > 0
    depth = depth.copy()
    depth[~valid] = 0.0
    return depth, valid
