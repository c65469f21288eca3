"""Synthetic first-person RGBD scenes with planted action-objects.

Every frame shows a tabletop-height target at reach distance plus
distractors engineered so that no single cue identifies it:

* far clones share the target's color but sit meters away,
* a near off-color object shares its distance, height and size,
* a near same-color clone shares everything except its side of the
  frame: the target keeps a characteristic place left of center, the
  clone mirrors it on the right.

Only the joint signature (color AND reach distance AND the left-band
placement) separates the target, which gives the appearance pathway,
the depth/height pathway, and the coordinate embedding each a reason to
exist. The camera pitch and yaw jitter per frame, so image position is
a noisy proxy for distance while the depth and height channels stay
clean.

Rendering is analytic per pixel: objects are vertical billboards at a
fixed world distance, the floor and back wall close the scene, and the
depth map is the exact camera-space depth of the nearest hit.
"""

import json
import math
import os
from dataclasses import dataclass, asdict, replace

import numpy as np

from .data import save_frame, write_manifest
from .dhg import DhgBounds
from .stereo import StereoCalib

TARGET_COLOR = (0.85, 0.15, 0.12)

# Off-color palette with luma close to the target's, so the grayscale
# channel alone cannot separate them.
OFFCOLOR_PALETTE = (
    (0.16, 0.34, 0.78),
    (0.10, 0.55, 0.22),
    (0.12, 0.45, 0.55),
    (0.45, 0.42, 0.10),
)

GROUND_COLORS = ((0.42, 0.36, 0.30), (0.36, 0.38, 0.33), (0.45, 0.40, 0.26), (0.38, 0.33, 0.36))
WALL_COLORS = ((0.55, 0.55, 0.60), (0.60, 0.52, 0.48), (0.50, 0.58, 0.55), (0.58, 0.56, 0.46))

_DEFAULT_CALIB = StereoCalib(focal_px=40.0, baseline_m=0.1, camera_height_m=1.45,
                             pitch_rad=0.52, principal_point=(31.5, 31.5))


@dataclass(frozen=True)
class ObjectFamily:
    """One distractor family, sampled fresh every frame.

    ``u_band`` is the apparent horizontal offset of the object center
    from the principal point, in pixels (before yaw jitter); ``side``
    says where it lands: the target's side, the ``opposite`` side, or
    ``any`` side at random.
    """

    count: int
    depth_range: tuple          # world horizontal distance band (m)
    u_band: tuple               # |u| band of the center, in pixels
    side: str                   # "target" | "opposite" | "any"
    height_range: tuple         # base height above ground (m)
    size_range: tuple
    color: tuple = None         # None clones the target color
    match_target_shape: bool = False


@dataclass(frozen=True)
class SceneSpec:
    scene_id: str
    seed: int
    n_frames: int = 60
    image_size: tuple = (64, 64)
    calib: StereoCalib = _DEFAULT_CALIB
    bounds: DhgBounds = DhgBounds()
    wall_distance: float = 5.0
    ground_color: tuple = GROUND_COLORS[0]
    wall_color: tuple = WALL_COLORS[0]
    target_color: tuple = TARGET_COLOR
    target_depth_range: tuple = (0.50, 0.70)   # horizontal distance; camera
                                               # depth lands in the 0.5-1.0 m reach band
    target_height_range: tuple = (0.72, 0.86)  # tabletop band
    target_size_range: tuple = (0.26, 0.31)
    target_u_band: tuple = (12.6, 18.5)        # characteristic left-of-center band
    families: tuple = (
        ObjectFamily(count=2, depth_range=(2.3, 3.4), u_band=(0.0, 21.0), side="any",
                     height_range=(0.0, 0.35), size_range=(0.55, 0.85)),
        ObjectFamily(count=1, depth_range=(0.50, 0.70), u_band=(12.6, 18.5), side="opposite",
                     height_range=(0.72, 0.86), size_range=(0.26, 0.31),
                     match_target_shape=True),
        ObjectFamily(count=1, depth_range=(0.50, 0.70), u_band=(0.0, 18.5), side="any",
                     height_range=(0.72, 0.86), size_range=(0.26, 0.31),
                     color=OFFCOLOR_PALETTE[0]),
    )
    pitch_jitter: float = 0.05
    yaw_jitter: float = 0.03
    color_jitter: float = 0.04
    noise_sigma: float = 0.01

    def __post_init__(self):
        lo, hi = self.target_depth_range
        if not any(f.depth_range[0] > hi or f.depth_range[1] < lo
                   for f in self.families):
            raise ValueError("no distractor family has a distance band disjoint "
                             "from the target's; the far color clones must exist")
        # The mirrored clone must stay on its own side of the vertical
        # midline after size spread and yaw jitter.
        z_lo, _ = _target_cam_depth_bounds(self)
        half_px = self.calib.focal_px * self.target_size_range[1] / 2 / z_lo
        yaw_px = self.calib.focal_px * math.tan(self.yaw_jitter)
        if self.target_u_band[0] - half_px - yaw_px < 0.5:
            raise ValueError(f"target u band {self.target_u_band} collides with the "
                             f"image midline (object half width {half_px:.1f} px, "
                             f"yaw sweep {yaw_px:.1f} px)")


def _target_cam_depth_bounds(spec):
    """Camera-space depth extremes of target surface points."""
    lows, highs = [], []
    for dth in (-spec.pitch_jitter, spec.pitch_jitter):
        th = spec.calib.pitch_rad + dth
        for g in spec.target_depth_range:
            for h in (spec.target_height_range[0],
                      spec.target_height_range[1] + spec.target_size_range[1]):
                z = math.cos(th) * g + math.sin(th) * (spec.calib.camera_height_m - h)
                lows.append(z)
                highs.append(z)
    return min(lows), max(highs)


@dataclass
class Billboard:
    distance: float   # world z of the vertical plane
    lateral: float    # world x of the center
    base: float       # height of the lower edge above ground
    size: float
    shape: str        # "rect" | "disc"
    color: tuple
    is_target: bool = False


def _rotate_dirs(dirs, pitch, yaw):
    dx, dy, dz = dirs
    cth, sth = math.cos(pitch), math.sin(pitch)
    wy = dy * cth + sth * dz
    wz = -dy * sth + cth * dz
    cphi, sphi = math.cos(yaw), math.sin(yaw)
    wx = dx * cphi + wz * sphi
    wz = -dx * sphi + wz * cphi
    return wx, wy, wz


def _project(points, calib, pitch, yaw):
    """World points (N x 3, y down) to pixel coordinates and camera depth."""
    pts = np.asarray(points, dtype=np.float64)
    cphi, sphi = math.cos(yaw), math.sin(yaw)
    x1 = pts[:, 0] * cphi - pts[:, 2] * sphi
    z1 = pts[:, 0] * sphi + pts[:, 2] * cphi
    cth, sth = math.cos(pitch), math.sin(pitch)
    ycam = pts[:, 1] * cth - z1 * sth
    zcam = pts[:, 1] * sth + z1 * cth
    cx, cy = calib.principal_point
    u = cx + calib.focal_px * x1 / zcam
    v = cy + calib.focal_px * ycam / zcam
    return u, v, zcam


def _in_frame(obj, spec, pitch, yaw, margin=1.0):
    h, w = spec.image_size
    hw = obj.size / 2
    xs = (obj.lateral - hw, obj.lateral + hw)
    ys = (spec.calib.camera_height_m - (obj.base + obj.size),
          spec.calib.camera_height_m - obj.base)
    corners = [(x, y, obj.distance) for x in xs for y in ys]
    u, v, zc = _project(corners, spec.calib, pitch, yaw)
    if np.any(zc <= 0.05):
        return False
    return bool(np.all(u >= margin) and np.all(u <= w - 1 - margin)
                and np.all(v >= margin) and np.all(v <= h - 1 - margin))


def _jitter_color(color, jitter, rng):
    c = np.asarray(color) + rng.uniform(-jitter, jitter, 3)
    return tuple(np.clip(c, 0.0, 1.0))


def _center_cam_depth(spec, pitch, g, base, size):
    y_down = spec.calib.camera_height_m - (base + size / 2)
    return math.cos(pitch) * g + math.sin(pitch) * y_down


def _sample_object(spec, rng, fam_depth, fam_height, fam_size, u_band, sign,
                   pitch, color, shape):
    g = rng.uniform(*fam_depth)
    base = rng.uniform(*fam_height)
    size = rng.uniform(*fam_size)
    u = sign * rng.uniform(*u_band)
    z_center = _center_cam_depth(spec, pitch, g, base, size)
    lateral = u * z_center / spec.calib.focal_px
    return Billboard(distance=g, lateral=lateral, base=base, size=size,
                     shape=shape, color=color, is_target=False), u, z_center


def _sample_layout(spec, rng):
    f = spec.calib.focal_px
    for _ in range(100):
        pitch = spec.calib.pitch_rad + rng.uniform(-spec.pitch_jitter, spec.pitch_jitter)
        yaw = rng.uniform(-spec.yaw_jitter, spec.yaw_jitter)

        target, t_u, t_z = _sample_object(
            spec, rng, spec.target_depth_range, spec.target_height_range,
            spec.target_size_range, spec.target_u_band, -1.0, pitch,
            _jitter_color(spec.target_color, spec.color_jitter, rng), "rect")
        target.is_target = True
        objects = [target]
        placed = [(t_u, f * target.size / 2 / t_z)]

        ok = True
        for fam in spec.families:
            for _ in range(fam.count):
                if fam.side == "target":
                    sign = -1.0
                elif fam.side == "opposite":
                    sign = 1.0
                else:
                    sign = 1.0 if rng.random() < 0.5 else -1.0
                base_color = spec.target_color if fam.color is None else fam.color
                shape = target.shape if fam.match_target_shape else \
                    ("rect" if rng.random() < 0.5 else "disc")
                near = fam.depth_range == spec.target_depth_range
                obj = None
                for _try in range(20):
                    cand, u, z = _sample_object(
                        spec, rng, fam.depth_range, fam.height_range, fam.size_range,
                        fam.u_band, sign if fam.side != "any" else
                        (1.0 if rng.random() < 0.5 else -1.0),
                        pitch, _jitter_color(base_color, spec.color_jitter, rng), shape)
                    if not near:
                        obj = cand
                        break
                    half = f * cand.size / 2 / z
                    if all(abs(u - pu) >= half + ph + 2.0 for pu, ph in placed):
                        obj = cand
                        placed.append((u, half))
                        break
                if obj is None:
                    ok = False
                    break
                objects.append(obj)
            if not ok:
                break
        if not ok:
            continue
        if all(_in_frame(o, spec, pitch, yaw) for o in objects):
            return pitch, yaw, objects
    raise ValueError(f"scene {spec.scene_id!r}: could not place objects fully in "
                     f"frame after 100 attempts; ranges collide with the field of view")


def render_frame(spec, rng):
    """One frame: returns (rgb u8 HxWx3, depth m, mask bool, pitch, yaw)."""
    pitch, yaw, objects = _sample_layout(spec, rng)
    h, w = spec.image_size
    cx, cy = spec.calib.principal_point
    f = spec.calib.focal_px
    u = (np.arange(w) - cx) / f
    v = (np.arange(h) - cy) / f
    dx = np.tile(u[None, :], (h, 1))
    dy = np.tile(v[:, None], (1, w))
    wx, wy, wz = _rotate_dirs((dx, dy, np.ones_like(dx)), pitch, yaw)

    depth = np.full((h, w), np.inf)
    ids = np.full((h, w), -1, dtype=np.int64)

    def hit(t, inside, obj_id):
        better = inside & (t > 0) & (t < depth)
        depth[better] = t[better]
        ids[better] = obj_id

    # ground (id 0) then wall (id 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        tg = np.where(wy > 1e-9, spec.calib.camera_height_m / np.where(wy > 1e-9, wy, 1.0), np.inf)
    hit(tg, np.isfinite(tg), 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        tw = np.where(wz > 1e-9, spec.wall_distance / np.where(wz > 1e-9, wz, 1.0), np.inf)
    hit(tw, np.isfinite(tw), 1)

    target_id = -1
    for k, obj in enumerate(objects):
        obj_id = 2 + k
        if obj.is_target:
            target_id = obj_id
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(wz > 1e-9, obj.distance / np.where(wz > 1e-9, wz, 1.0), np.inf)
        px = t * wx
        py = t * wy
        height = spec.calib.camera_height_m - py
        hw = obj.size / 2
        ctr_h = obj.base + hw
        if obj.shape == "rect":
            inside = (np.abs(px - obj.lateral) <= hw) & (height >= obj.base) & (height <= obj.base + obj.size)
        else:
            inside = (px - obj.lateral) ** 2 + (height - ctr_h) ** 2 <= hw ** 2
        hit(t, inside & np.isfinite(t), obj_id)

    colors = np.array([spec.ground_color, spec.wall_color] + [o.color for o in objects])
    rgb = colors[ids]
    rgb = np.clip(rgb + rng.normal(0.0, spec.noise_sigma, rgb.shape), 0.0, 1.0)
    rgb_u8 = np.rint(rgb * 255.0).astype(np.uint8)
    mask = ids == target_id
    return rgb_u8, depth, mask, pitch, yaw


def frame_rng(spec, index):
    return np.random.default_rng(np.random.SeedSequence([spec.seed, index]))


def generate_scene(spec, root):
    """Render and write every frame of a scene; returns manifest entries."""
    entries = []
    for i in range(spec.n_frames):
        rgb, depth, mask, pitch, _yaw = render_frame(spec, frame_rng(spec, i))
        entry = save_frame(root, spec.scene_id, f"{i:04d}", rgb, depth,
                           np.ones_like(mask, dtype=bool), mask)
        entry["pitch_rad"] = pitch
        entries.append(entry)
    return {"id": spec.scene_id, "frames": entries}


def generate_dataset(specs, root):
    """Write all scenes plus the manifest; returns the manifest path."""
    if not specs:
        raise ValueError("no scene specs")
    calib, bounds = specs[0].calib, specs[0].bounds
    for s in specs[1:]:
        if s.calib != calib or s.bounds != bounds:
            raise ValueError("all scenes in one dataset must share calib and bounds")
    os.makedirs(root, exist_ok=True)
    scenes = [generate_scene(spec, root) for spec in specs]
    manifest = os.path.join(root, "manifest.json")
    write_manifest(manifest, calib, bounds, scenes)
    return manifest


def _scene_seed(master_seed, index):
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1)[0])


def default_scene_specs(seed=0, n_scenes=4, n_frames=60, image_size=64):
    """The default desk-scale dataset: scenes vary backdrop, wall distance
    and the off-color palette while the target signature stays shared."""
    specs = []
    for i in range(n_scenes):
        families = list(SceneSpec.__dataclass_fields__["families"].default)
        families[2] = replace(families[2], color=OFFCOLOR_PALETTE[i % len(OFFCOLOR_PALETTE)])
        specs.append(SceneSpec(
            scene_id=f"scene{i}",
            seed=_scene_seed(seed, i),
            n_frames=n_frames,
            image_size=(image_size, image_size),
            wall_distance=4.0 + 0.8 * i,
            ground_color=GROUND_COLORS[i % len(GROUND_COLORS)],
            wall_color=WALL_COLORS[i % len(WALL_COLORS)],
            families=tuple(families),
        ))
    return specs


def specs_to_json(specs):
    return json.dumps([asdict(s) for s in specs], indent=1, default=list)


def specs_from_json_doc(doc):
    """Accept either a compact {seed, scenes, frames, imageSize} request or
    a full list of per-scene spec dictionaries."""
    if isinstance(doc, dict):
        return default_scene_specs(seed=int(doc.get("seed", 0)),
                                   n_scenes=int(doc.get("scenes", 4)),
                                   n_frames=int(doc.get("frames", 60)),
                                   image_size=int(doc.get("imageSize", 64)))
    specs = []
    for item in doc:
        item = dict(item)
        item["calib"] = StereoCalib(
            focal_px=item["calib"]["focal_px"], baseline_m=item["calib"]["baseline_m"],
            camera_height_m=item["calib"]["camera_height_m"],
            pitch_rad=item["calib"]["pitch_rad"],
            principal_point=tuple(item["calib"]["principal_point"]))
        item["bounds"] = DhgBounds(**item["bounds"])
        item["image_size"] = tuple(item["image_size"])
        fams = []
        for fdoc in item["families"]:
            fdoc = dict(fdoc)
            for key in ("depth_range", "u_band", "height_range", "size_range"):
                fdoc[key] = tuple(fdoc[key])
            if fdoc.get("color") is not None:
                fdoc["color"] = tuple(fdoc["color"])
            fams.append(ObjectFamily(**fdoc))
        item["families"] = tuple(fams)
        for key in ("ground_color", "wall_color", "target_color", "target_depth_range",
                    "target_height_range", "target_size_range", "target_u_band"):
            item[key] = tuple(item[key])
        specs.append(SceneSpec(**item))
    return specs


# ---------------------------------------------------------------------------
# shortcut oracles: how well can single cues identify the target?


def _loaded_frames(dataset, max_frames=None):
    from .data import normalize_inputs
    frames = dataset.frames()
    if max_frames is not None:
        frames = frames[:max_frames]
    for rec in frames:
        frame = dataset.load_frame(rec)
        rgb, dhg = normalize_inputs(frame, dataset.calib, dataset.bounds,
                                    frame["mask"].shape)
        yield rgb, dhg, frame["mask"], frame


def channel_bayes_scores(dataset, channel, max_frames=None, bins=48):
    """Posterior P(target | channel value) via dataset-wide histograms.

    ``channel`` is one of r, g, b, d, h, gray. Returns (score maps, masks):
    the Bayes-optimal single-channel classifier up to binning.
    """
    sel = {"r": ("rgb", 0), "g": ("rgb", 1), "b": ("rgb", 2),
           "d": ("dhg", 0), "h": ("dhg", 1), "gray": ("dhg", 2)}
    if channel not in sel:
        raise ValueError(f"unknown channel {channel!r}")
    kind, idx = sel[channel]
    values, masks = [], []
    for rgb, dhg, mask, _ in _loaded_frames(dataset, max_frames):
        arr = rgb if kind == "rgb" else dhg
        values.append(arr[idx])
        masks.append(mask)
    edges = np.linspace(0.0, 1.0, bins + 1)
    pos = np.zeros(bins)
    neg = np.zeros(bins)
    for vals, mask in zip(values, masks):
        binned = np.clip(np.digitize(vals, edges) - 1, 0, bins - 1)
        pos += np.bincount(binned[mask].ravel(), minlength=bins)
        neg += np.bincount(binned[~mask].ravel(), minlength=bins)
    posterior = (pos + 1e-9) / (pos + neg + 2e-9)
    scores = []
    for vals in values:
        binned = np.clip(np.digitize(vals, edges) - 1, 0, bins - 1)
        scores.append(posterior[binned])
    return scores, masks


def color_match_scores(dataset, spec, max_frames=None):
    """1 where the pixel's RGB is closest to the target color among the
    scene palette (the RGB-only Bayes rule for flat-colored objects)."""
    palette = np.array([spec.target_color, spec.ground_color, spec.wall_color]
                       + list(OFFCOLOR_PALETTE))
    scores, masks = [], []
    for rgb, _, mask, _ in _loaded_frames(dataset, max_frames):
        px = np.moveaxis(rgb, 0, -1)[:, :, None, :]
        d2 = ((px - palette[None, None, :, :]) ** 2).sum(-1)
        scores.append((np.argmin(d2, axis=2) == 0).astype(np.float64))
        masks.append(mask)
    return scores, masks


def signature_scores(dataset, spec, max_frames=None, depth_pad=0.12):
    """The joint rule: target color AND reach-band depth AND the
    characteristic left-of-center placement, all computed from the
    rendered channels."""
    palette = np.array([spec.target_color, spec.ground_color, spec.wall_color]
                       + list(OFFCOLOR_PALETTE))
    z_lo, z_hi = _target_cam_depth_bounds(spec)
    z_lo *= 1 - depth_pad
    z_hi *= 1 + depth_pad
    cx, _ = spec.calib.principal_point
    scores, masks = [], []
    for rgb, _, mask, frame in _loaded_frames(dataset, max_frames):
        px = np.moveaxis(rgb, 0, -1)[:, :, None, :]
        d2 = ((px - palette[None, None, :, :]) ** 2).sum(-1)
        is_color = np.argmin(d2, axis=2) == 0
        depth = frame["depth"]
        in_band = (depth >= z_lo) & (depth <= z_hi)
        on_left = np.arange(depth.shape[1])[None, :] < cx
        scores.append((is_color & in_band & on_left).astype(np.float64))
        masks.append(mask)
    return scores, masks
