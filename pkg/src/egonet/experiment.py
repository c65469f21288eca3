"""Leave-one-out experiments: train a variant per split, or score a
training-free baseline, and report MF/AP per held-out scene."""

from dataclasses import replace

import numpy as np

from . import metrics
from .data import build_samples, frame_label
from .model import EgoNetConfig, build_variant
from .training import TrainConfig, leave_one_out_splits, train_loop

BASELINES = ("aop", "center", "constant")


def model_predictor(kind, model_config, train_config):
    """Predictor factory: trains the variant on the split's train scenes."""
    def factory(dataset, train_scene_ids, seed):
        model = build_variant(kind, model_config, seed=seed)
        samples = build_samples(dataset, train_scene_ids, model_config.input_size)
        train_loop(model, samples, replace(train_config, seed=seed))

        def predict(frames_rgb, frames_dhg):
            return model.forward(frames_rgb, frames_dhg)

        return predict
    return factory


def baseline_predictor(name, sigma_frac=0.25):
    """Predictor factory for the training-free baselines."""
    if name not in BASELINES:
        raise ValueError(f"unknown baseline {name!r}; expected one of {BASELINES}")

    def factory(dataset, train_scene_ids, seed):
        del seed
        size = None
        prior = None
        if name == "aop":
            masks = []
            for rec in dataset.frames(train_scene_ids):
                masks.append(dataset.load_frame(rec)["mask"])
            prior = metrics.aop_baseline(masks)
            size = prior.shape

        def predict(frames_rgb, frames_dhg):
            n, _, h, w = frames_rgb.shape
            if name == "aop":
                m = prior if prior.shape == (h, w) else metrics.aop_baseline([prior], (h, w))
                return np.repeat(m[None], n, axis=0)
            if name == "center":
                return np.repeat(metrics.center_prior(h, w, sigma_frac)[None], n, axis=0)
            return np.full((n, h, w), 0.5)

        return predict
    return factory


def evaluate_dataset(dataset, splits, factory, input_size, seed=0,
                     thresholds=None, batch=8):
    """Run every split: fit on the train scenes, score the held-out scene.

    Returns an EvalReport with one (scene, MF, AP) row per split plus the
    per-scene PR curves; the report mean is the arithmetic mean over
    scenes.
    """
    rows = []
    curves = {}
    prob_maps = {}
    for train_ids, test_id in splits:
        predict = factory(dataset, train_ids, seed)
        samples = build_samples(dataset, [test_id], input_size)
        gts = [frame_label(dataset.load_frame(rec), input_size).astype(bool)
               for rec in dataset.frames([test_id])]
        maps = []
        for i in range(0, len(samples), batch):
            chunk = samples[i:i + batch]
            rgb = np.stack([s[0] for s in chunk])
            dhg = np.stack([s[1] for s in chunk])
            maps.extend(list(predict(rgb, dhg)))
        mf, ap, pr = metrics.evaluate_maps(maps, gts, thresholds)
        rows.append((test_id, mf, ap))
        curves[test_id] = pr
        prob_maps[test_id] = maps
    return metrics.EvalReport(rows=rows, curves=curves, prob_maps=prob_maps)


def run_ablation(dataset, model_config, train_config, seed=0, variants=None,
                 thresholds=None):
    """Train and evaluate all architecture variants with shared seed and
    splits; returns {variant: EvalReport}."""
    from .model import VARIANTS
    variants = list(variants or VARIANTS)
    splits = leave_one_out_splits(dataset.scene_ids)
    results = {}
    for kind in variants:
        factory = model_predictor(kind, model_config, train_config)
        results[kind] = evaluate_dataset(dataset, splits, factory,
                                         model_config.input_size, seed=seed,
                                         thresholds=thresholds)
    return results
