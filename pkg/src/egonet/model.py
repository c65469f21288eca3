"""Two-pathway fully convolutional action-object detector.

An RGB pathway and a DHG pathway each reduce a 3-channel input to a
feature map at 1/8 resolution. The joint pathway concatenates both
feature maps with downsampled X/Y coordinate grids, embeds them with a
3x3 convolution, blends with a second 3x3 convolution, and classifies
each cell into action-object vs background with a 1x1 convolution.
Logits are upsampled back to input resolution bilinearly and softmaxed
into a per-pixel probability map.

Ablation variants share the construction: ``single`` runs one pathway on
the channel-concat of RGB, DHG and full-resolution coordinates;
``nocoords`` drops the coordinate channels; ``noembed`` drops the blend
convolution.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from ._kv import format_kv_text, parse_kv_text

UPSAMPLE_FACTOR = 8

VARIANTS = ("full", "single", "nocoords", "noembed")

_VARIANT_ALIASES = {
    "full": "full",
    "single": "single", "singlestream": "single",
    "nocoords": "nocoords", "nocoord": "nocoords",
    "noembed": "noembed",
}

DEFAULT_PATHWAY = "conv3x3c16,relu,pool2,conv3x3c32,relu,pool2,conv3x3c64,relu,pool2,conv3x3c64d2,relu"

_CONV_RE = re.compile(r"^conv(\d+)x(\d+)c(\d+)(?:d(\d+))?(?:s(\d+))?$")
_POOL_RE = re.compile(r"^pool(\d+)$")


def parse_pathway(spec):
    """Parse a comma-separated layer list like ``conv3x3c16,relu,pool2``.

    Conv entries take optional dilation (``d2``) and stride (``s2``)
    suffixes and use symmetric zero padding that preserves spatial size
    at stride 1.
    """
    layers = []
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        m = _CONV_RE.match(item)
        if m:
            kh, kw, ch = int(m.group(1)), int(m.group(2)), int(m.group(3))
            dil = int(m.group(4) or 1)
            stride = int(m.group(5) or 1)
            if kh != kw or kh % 2 == 0:
                raise ValueError(f"conv kernels must be square and odd, got {item!r}")
            layers.append(("conv", kh, ch, stride, dil))
            continue
        m = _POOL_RE.match(item)
        if m:
            layers.append(("pool", int(m.group(1))))
            continue
        if item == "relu":
            layers.append(("relu",))
            continue
        raise ValueError(f"unknown pathway layer {item!r}")
    if not layers:
        raise ValueError("empty pathway spec")
    return layers


def pathway_stride(layers):
    s = 1
    for layer in layers:
        if layer[0] == "conv":
            s *= layer[3]
        elif layer[0] == "pool":
            s *= layer[1]
    return s


def pathway_out_channels(layers, in_channels):
    ch = in_channels
    for layer in layers:
        if layer[0] == "conv":
            ch = layer[2]
    return ch


@dataclass(frozen=True)
class EgoNetConfig:
    input_size: tuple = (64, 64)
    pathway: str = DEFAULT_PATHWAY
    feature_channels: int = 64
    embed_channels: int = 64
    blend_channels: int = 64
    dropout_rate: float = 0.5

    def __post_init__(self):
        h, w = self.input_size
        if h % UPSAMPLE_FACTOR or w % UPSAMPLE_FACTOR:
            raise ValueError(f"input size {self.input_size} must be divisible by {UPSAMPLE_FACTOR}")
        layers = parse_pathway(self.pathway)
        stride = pathway_stride(layers)
        if stride != UPSAMPLE_FACTOR:
            raise ValueError(f"pathway stride must be exactly {UPSAMPLE_FACTOR}, "
                             f"got {stride} from {self.pathway!r}")
        out_ch = pathway_out_channels(layers, 3)
        if out_ch != self.feature_channels:
            raise ValueError(f"feature_channels {self.feature_channels} does not match "
                             f"pathway output channels {out_ch}")

    @property
    def layers(self):
        return parse_pathway(self.pathway)

    @property
    def feature_size(self):
        return (self.input_size[0] // UPSAMPLE_FACTOR,
                self.input_size[1] // UPSAMPLE_FACTOR)

    def to_text(self):
        return format_kv_text({
            "input_height": self.input_size[0],
            "input_width": self.input_size[1],
            "pathway": self.pathway,
            "feature_channels": self.feature_channels,
            "embed_channels": self.embed_channels,
            "blend_channels": self.blend_channels,
            "dropout_rate": repr(self.dropout_rate),
        })

    @classmethod
    def from_text(cls, text):
        kv = parse_kv_text(text)
        return cls(
            input_size=(int(kv["input_height"]), int(kv["input_width"])),
            pathway=kv["pathway"],
            feature_channels=int(kv["feature_channels"]),
            embed_channels=int(kv["embed_channels"]),
            blend_channels=int(kv["blend_channels"]),
            dropout_rate=float(kv["dropout_rate"]),
        )

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())

    def digest(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def _coord_axis(n):
    if n == 1:
        return np.zeros(1)
    return -1.0 + 2.0 * np.arange(n) / (n - 1)


def build_coord_grids(input_h, input_w, factor=UPSAMPLE_FACTOR):
    """X/Y mesh grids at feature resolution, normalized to [-1, 1].

    X increases left to right, Y top to bottom; corner values are
    exactly +-1 (0 for a degenerate single-cell axis).
    """
    if input_h % factor or input_w % factor:
        raise ValueError(f"input size ({input_h}, {input_w}) not divisible by factor {factor}")
    fh, fw = input_h // factor, input_w // factor
    X = np.tile(_coord_axis(fw)[None, :], (fh, 1))
    Y = np.tile(_coord_axis(fh)[:, None], (1, fw))
    return X, Y


def _he_conv(rng, out_ch, in_ch, k):
    std = math.sqrt(2.0 / (in_ch * k * k))
    return rng.standard_normal((out_ch, in_ch, k, k)) * std


def init_params(config, kind, seed):
    """He-normal conv weights, zero biases, fully determined by the seed."""
    kind = normalize_variant(kind)
    rng = np.random.default_rng(seed)
    params = {}

    def add_conv(name, out_ch, in_ch, k):
        params[f"{name}.w"] = T.Tensor(_he_conv(rng, out_ch, in_ch, k), requires_grad=True)
        params[f"{name}.b"] = T.Tensor(np.zeros(out_ch), requires_grad=True)

    def add_pathway(prefix, in_ch):
        ch = in_ch
        for i, layer in enumerate(config.layers):
            if layer[0] == "conv":
                _, k, out_ch, _, _ = layer
                add_conv(f"{prefix}.conv{i}", out_ch, ch, k)
                ch = out_ch

    F = config.feature_channels
    if kind == "single":
        add_pathway("single", 8)  # rgb + dhg + 2 coord channels
        joint_in = F
    else:
        add_pathway("rgb", 3)
        add_pathway("dhg", 3)
        joint_in = 2 * F + (0 if kind == "nocoords" else 2)

    add_conv("joint.embed", config.embed_channels, joint_in, 3)
    if kind == "noembed":
        add_conv("joint.cls", 2, config.embed_channels, 1)
    else:
        add_conv("joint.blend", config.blend_channels, config.embed_channels, 3)
        add_conv("joint.cls", 2, config.blend_channels, 1)
    return params


def normalize_variant(kind):
    key = str(kind).replace("_", "").replace("-", "").lower()
    if key not in _VARIANT_ALIASES:
        raise ValueError(f"unknown variant {kind!r}; expected one of {VARIANTS}")
    return _VARIANT_ALIASES[key]


def pathway_forward(x, params, prefix, config):
    """Run one configured conv/relu/pool stack; output is input/8 spatially."""
    h = x
    for i, layer in enumerate(config.layers):
        if layer[0] == "conv":
            _, k, _, stride, dil = layer
            pad = dil * (k - 1) // 2
            h = T.conv2d(h, params[f"{prefix}.conv{i}.w"], params[f"{prefix}.conv{i}.b"],
                         stride=stride, pad=pad, dilation=dil)
        elif layer[0] == "relu":
            h = T.relu(h)
        elif layer[0] == "pool":
            h = T.maxpool2d(h, layer[1])
    return h


def _coords_tensor(batch, input_size, factor):
    X, Y = build_coord_grids(input_size[0], input_size[1], factor=factor)
    grid = np.stack([X, Y])[None]
    return T.Tensor(np.broadcast_to(grid, (batch,) + grid.shape[1:]).copy())


def joint_forward(rgb_feat, dhg_feat, coords, params, config, kind="full",
                  training=False, rng=None):
    """Fuse pathway features (and coordinates) into 2-channel logits."""
    feats = [rgb_feat, dhg_feat]
    if kind != "nocoords":
        if coords is None:
            raise ValueError("coordinate grids required for this variant")
        fh, fw = rgb_feat.data.shape[2:]
        if coords.data.shape[2:] != (fh, fw):
            raise ValueError(f"coordinate grid size {coords.data.shape[2:]} does not match "
                             f"feature size {(fh, fw)}")
        feats.append(coords)
    concat = T.concat_channels(feats)
    return _joint_head(concat, params, config, kind, training, rng)


def _joint_head(h, params, config, kind, training, rng):
    if training and rng is None:
        raise ValueError("training mode needs an rng for dropout")
    h = T.conv2d(h, params["joint.embed.w"], params["joint.embed.b"], pad=1)
    h = T.relu(h)
    h = T.dropout(h, config.dropout_rate, training, rng)
    if kind != "noembed":
        h = T.conv2d(h, params["joint.blend.w"], params["joint.blend.b"], pad=1)
        h = T.relu(h)
        h = T.dropout(h, config.dropout_rate, training, rng)
    return T.conv2d(h, params["joint.cls.w"], params["joint.cls.b"])


class EgoNet:
    """A variant of the detector bound to its config and parameters."""

    def __init__(self, kind, config, params=None, seed=0):
        self.kind = normalize_variant(kind)
        self.config = config
        self.params = params if params is not None else init_params(config, self.kind, seed)

    def logits(self, rgb, dhg, training=False, rng=None):
        """Feature-resolution logits (B x 2 x H/8 x W/8) for a batch."""
        rgb = rgb if isinstance(rgb, T.Tensor) else T.Tensor(rgb)
        dhg = dhg if isinstance(dhg, T.Tensor) else T.Tensor(dhg)
        if rgb.data.shape[2:] != dhg.data.shape[2:]:
            raise ValueError(f"rgb {rgb.data.shape} and dhg {dhg.data.shape} sizes differ")
        B, _, H, W = rgb.data.shape
        if H % UPSAMPLE_FACTOR or W % UPSAMPLE_FACTOR:
            raise ValueError(f"input {H}x{W} not divisible by {UPSAMPLE_FACTOR}")
        if self.kind == "single":
            coords_full = _coords_tensor(B, (H, W), factor=1)
            x = T.concat_channels([rgb, dhg, coords_full])
            feat = pathway_forward(x, self.params, "single", self.config)
            return _joint_head(feat, self.params, self.config, self.kind, training, rng)
        rgb_feat = pathway_forward(rgb, self.params, "rgb", self.config)
        dhg_feat = pathway_forward(dhg, self.params, "dhg", self.config)
        coords = None
        if self.kind != "nocoords":
            coords = _coords_tensor(B, (H, W), factor=UPSAMPLE_FACTOR)
        return joint_forward(rgb_feat, dhg_feat, coords, self.params, self.config,
                             kind=self.kind, training=training, rng=rng)

    def loss(self, rgb, dhg, labels, training=True, rng=None):
        """Per-pixel softmax loss at input resolution; returns (loss, probs)."""
        lg = self.logits(rgb, dhg, training=training, rng=rng)
        up = T.bilinear_upsample(lg, UPSAMPLE_FACTOR)
        return T.pixel_softmax_loss(up, labels)

    def forward(self, rgb, dhg):
        """Action-object probability map at input resolution (inference)."""
        lg = self.logits(rgb, dhg, training=False)
        up = T.bilinear_upsample(lg, UPSAMPLE_FACTOR)
        z = up.data
        m = z.max(axis=1, keepdims=True)
        e = np.exp(z - m)
        probs = e / e.sum(axis=1, keepdims=True)
        return probs[:, 1]

    def clone_params(self):
        return {k: np.array(v.data, copy=True) for k, v in self.params.items()}


def build_variant(kind, config, seed=0):
    """Construct one of the architecture variants: full, single stream,
    without coordinates, or without the blend convolution."""
    return EgoNet(kind, config, seed=seed)


def logit_interior_margin(config, kind="full"):
    """Feature cells within this margin of the border can be touched by
    zero padding; cells beyond it are padding-free."""
    halo = 0
    stride = 1
    for layer in config.layers:
        if layer[0] == "conv":
            _, k, _, s, dil = layer
            halo += stride * dil * (k - 1) // 2
            stride *= s
        elif layer[0] == "pool":
            stride *= layer[1]
    halo += stride * (3 - 1) // 2  # embed conv
    if kind != "noembed":
        halo += stride * (3 - 1) // 2  # blend conv
    return -(-halo // stride)
