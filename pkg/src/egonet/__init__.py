"""Action-object detection from first-person RGBD imagery.

A self-contained pipeline: stereo disparity by scanline dynamic
programming, DHG (depth / height above ground / grayscale) input
encoding, a two-pathway fully convolutional detector with a first-person
coordinate embedding, SGD training, threshold-swept MF/AP evaluation
with location-prior baselines, and a synthetic RGBD scene generator for
desk-scale experiments.
"""

from .dhg import DhgBounds, assemble_dhg, depth_to_height, to_grayscale
from .model import EgoNet, EgoNetConfig, build_coord_grids, build_variant
from .metrics import (aop_baseline, average_precision, center_prior, max_f_score,
                      point_to_mask, pr_curve)
from .stereo import StereoCalib, disparity_to_depth, scanline_disparity_dp
from .tensor import (Tensor, backward, bilinear_upsample, concat_channels, conv2d,
                     dropout, grad_check, maxpool2d, pixel_softmax_loss, relu,
                     set_default_dtype)
from .training import TrainConfig, leave_one_out_splits, sgd_momentum_step, train_loop

__version__ = "0.1.0"

__all__ = [
    "DhgBounds", "EgoNet", "EgoNetConfig", "StereoCalib", "Tensor", "TrainConfig",
    "aop_baseline", "assemble_dhg", "average_precision", "backward",
    "bilinear_upsample", "build_coord_grids", "build_variant", "center_prior",
    "concat_channels", "conv2d", "depth_to_height", "disparity_to_depth", "dropout",
    "grad_check", "leave_one_out_splits", "max_f_score", "maxpool2d",
    "pixel_softmax_loss", "point_to_mask", "pr_curve", "relu",
    "scanline_disparity_dp", "set_default_dtype", "sgd_momentum_step",
    "to_grayscale", "train_loop",
]
