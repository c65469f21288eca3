"""Dataset model, manifest format, and input normalization.

On disk a dataset is a directory with ``manifest.json`` plus per-scene
subdirectories holding ``rgb/NNNN.png`` (8-bit), ``depth/NNNN.png``
(16-bit millimeters) or ``depth/NNNN.pfm``, and ``mask/NNNN.png``
(8-bit, 255 marks the action-object). The manifest records the shared
calibration, the DHG normalization bounds, and a per-frame pitch when
the head pose varies frame to frame.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import imgio
from .dhg import DhgBounds, assemble_dhg, depth_to_height, to_grayscale
from .stereo import StereoCalib

FORMAT_VERSION = 1


class DatasetError(ValueError):
    pass


@dataclass
class FrameRecord:
    frame_id: str
    scene_id: str
    rgb_path: str
    depth_path: str
    mask_path: str
    pitch_rad: float = None  # per-frame override of the calib pitch


@dataclass
class Dataset:
    root: str
    calib: StereoCalib
    bounds: DhgBounds
    scenes: dict = field(default_factory=dict)  # scene_id -> [FrameRecord]

    @property
    def scene_ids(self):
        return list(self.scenes.keys())

    def frames(self, scene_ids=None):
        if scene_ids is None:
            scene_ids = self.scene_ids
        out = []
        for sid in scene_ids:
            out.extend(self.scenes[sid])
        return out

    def load_frame(self, rec):
        """Read one frame's images, validating sizes on first touch."""
        rgb = imgio.read_png_u8(os.path.join(self.root, rec.rgb_path))
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise DatasetError(f"{rec.rgb_path}: expected an RGB image, got shape {rgb.shape}")
        if rec.depth_path.endswith(".pfm"):
            depth, valid = imgio.read_depth_pfm(os.path.join(self.root, rec.depth_path))
        else:
            depth, valid = imgio.read_depth_png16(os.path.join(self.root, rec.depth_path))
        mask_u8 = imgio.read_png_u8(os.path.join(self.root, rec.mask_path))
        if mask_u8.ndim != 2:
            raise DatasetError(f"{rec.mask_path}: expected a grayscale mask, got shape {mask_u8.shape}")
        mask = mask_u8 >= 128
        if not (rgb.shape[:2] == depth.shape == mask.shape):
            raise DatasetError(f"frame {rec.scene_id}/{rec.frame_id}: size mismatch "
                               f"rgb {rgb.shape[:2]}, depth {depth.shape}, mask {mask.shape}")
        return {"rgb": rgb, "depth": depth, "depth_valid": valid, "mask": mask,
                "pitch_rad": rec.pitch_rad}


def load_dataset(manifest_path):
    try:
        with open(manifest_path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DatasetError(f"manifest not found: {manifest_path}")
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{manifest_path}: invalid JSON ({exc})")
    version = doc.get("formatVersion")
    if version != FORMAT_VERSION:
        raise DatasetError(f"{manifest_path}: unknown formatVersion {version!r}, "
                           f"expected {FORMAT_VERSION}")
    root = os.path.dirname(os.path.abspath(manifest_path))
    ds = Dataset(root=root,
                 calib=StereoCalib.from_dict(doc["calib"]),
                 bounds=DhgBounds.from_dict(doc["bounds"]))
    scenes = doc.get("scenes", [])
    if not scenes:
        raise DatasetError(f"{manifest_path}: no scenes")
    seen = set()
    for scene in scenes:
        sid = scene["id"]
        if not scene.get("frames"):
            raise DatasetError(f"{manifest_path}: scene {sid!r} has no frames")
        recs = []
        for fr in scene["frames"]:
            key = (sid, fr["id"])
            if key in seen:
                raise DatasetError(f"{manifest_path}: duplicate frame id {key}")
            seen.add(key)
            for path_key in ("rgb", "depth", "mask"):
                full = os.path.join(root, fr[path_key])
                if not os.path.exists(full):
                    raise DatasetError(f"{manifest_path}: missing file {fr[path_key]} "
                                       f"for frame {sid}/{fr['id']}")
            recs.append(FrameRecord(frame_id=fr["id"], scene_id=sid,
                                    rgb_path=fr["rgb"], depth_path=fr["depth"],
                                    mask_path=fr["mask"],
                                    pitch_rad=fr.get("pitch_rad")))
        ds.scenes[sid] = recs
    return ds


def save_frame(root, scene_id, frame_id, rgb_u8, depth_m, depth_valid, mask,
               depth_format="png16"):
    """Write one frame's images; returns manifest-relative paths."""
    sdir = os.path.join(root, scene_id)
    for sub in ("rgb", "depth", "mask"):
        os.makedirs(os.path.join(sdir, sub), exist_ok=True)
    rgb_rel = f"{scene_id}/rgb/{frame_id}.png"
    mask_rel = f"{scene_id}/mask/{frame_id}.png"
    if depth_format == "png16":
        depth_rel = f"{scene_id}/depth/{frame_id}.png"
        imgio.write_depth_png16(os.path.join(root, depth_rel), depth_m, depth_valid)
    elif depth_format == "pfm":
        depth_rel = f"{scene_id}/depth/{frame_id}.pfm"
        d = np.asarray(depth_m, dtype=np.float64).copy()
        d[~np.asarray(depth_valid, dtype=bool)] = 0.0
        imgio.write_pfm(os.path.join(root, depth_rel), d)
    else:
        raise ValueError(f"unknown depth format {depth_format!r}")
    imgio.write_png_u8(os.path.join(root, rgb_rel), rgb_u8)
    imgio.write_png_u8(os.path.join(root, mask_rel),
                       np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))
    return {"id": frame_id, "rgb": rgb_rel, "depth": depth_rel, "mask": mask_rel}


def write_manifest(path, calib, bounds, scenes):
    doc = {"formatVersion": FORMAT_VERSION,
           "calib": calib.to_dict(),
           "bounds": bounds.to_dict(),
           "scenes": scenes}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def _axis_coords(n_out, n_in):
    if n_out == 1 or n_in == 1:
        return np.zeros(n_out), np.zeros(n_out, dtype=np.int64), np.zeros(n_out, dtype=np.int64)
    src = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.minimum(src.astype(np.int64), n_in - 2)
    return src - lo, lo, lo + 1


def resize_bilinear(img, size):
    """Align-corners bilinear resampling of (..., H, W) arrays."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[-2:]
    oh, ow = size
    fy, y0, y1 = _axis_coords(oh, h)
    fx, x0, x1 = _axis_coords(ow, w)
    top = img[..., y0, :]
    bot = img[..., y1, :]
    rows = top * (1 - fy)[:, None] + bot * fy[:, None]
    left = rows[..., :, x0]
    right = rows[..., :, x1]
    return left * (1 - fx) + right * fx


def resize_nearest(img, size):
    """Nearest-neighbor resampling; keeps masks strictly binary."""
    img = np.asarray(img)
    h, w = img.shape[-2:]
    oh, ow = size
    ys = np.clip(np.rint(np.arange(oh) * (h - 1) / max(oh - 1, 1)).astype(np.int64), 0, h - 1)
    xs = np.clip(np.rint(np.arange(ow) * (w - 1) / max(ow - 1, 1)).astype(np.int64), 0, w - 1)
    return img[..., ys, :][..., :, xs]


def normalize_inputs(frame, calib, bounds, input_size):
    """Turn a loaded frame into model inputs.

    Returns (rgb, dhg) as 3 x H x W float arrays in [0, 1], resized
    bilinearly to ``input_size``. The frame's own pitch (if recorded)
    overrides the calibration pitch for the height channel.
    """
    rgb = np.moveaxis(frame["rgb"].astype(np.float64) / 255.0, -1, 0)
    depth, valid = frame["depth"], frame["depth_valid"]
    height, _ = depth_to_height(depth, valid, calib, pitch_rad=frame.get("pitch_rad"))
    gray = to_grayscale(rgb)
    dhg, _ = assemble_dhg(depth, height, gray, valid, bounds)
    if rgb.shape[1:] != tuple(input_size):
        rgb = resize_bilinear(rgb, input_size)
        dhg = resize_bilinear(dhg, input_size)
    return rgb, dhg


def frame_label(frame, input_size):
    mask = frame["mask"]
    if mask.shape != tuple(input_size):
        mask = resize_nearest(mask, input_size)
    return mask.astype(np.int64)


def build_samples(dataset, scene_ids, input_size):
    """Materialize (rgb, dhg, labels) training samples for the scenes."""
    samples = []
    for rec in dataset.frames(scene_ids):
        frame = dataset.load_frame(rec)
        rgb, dhg = normalize_inputs(frame, dataset.calib, dataset.bounds, input_size)
        samples.append((rgb, dhg, frame_label(frame, input_size)))
    return samples
