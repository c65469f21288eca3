"""Threshold-swept precision/recall, max F-score, average precision,
and the location-prior baselines.

Counts are pooled over the whole frame set (dataset-level pooling) at
each threshold; a pixel is positive when its probability is >= the
threshold. Degenerate conventions: precision is 1 when no pixel is
predicted positive, recall is 0 when the ground truth is empty, F is 0
when P + R is 0.
"""

import csv
from dataclasses import dataclass

import numpy as np

DEFAULT_THRESHOLDS = np.round(np.linspace(0.0, 1.0, 101), 2)


@dataclass
class PRCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray


def pr_curve(pred_maps, gt_masks, thresholds=None):
    """Pooled precision/recall over equal-sized (map, mask) pairs."""
    if len(pred_maps) != len(gt_masks):
        raise ValueError(f"{len(pred_maps)} maps vs {len(gt_masks)} masks")
    if len(pred_maps) == 0:
        raise ValueError("no maps to evaluate")
    pos_scores = []
    neg_scores = []
    for p, g in zip(pred_maps, gt_masks):
        p = np.asarray(p, dtype=np.float64)
        g = np.asarray(g, dtype=bool)
        if p.shape != g.shape:
            raise ValueError(f"map size {p.shape} does not match mask size {g.shape}")
        pos_scores.append(p[g])
        neg_scores.append(p[~g])
    pos = np.sort(np.concatenate(pos_scores))
    neg = np.sort(np.concatenate(neg_scores))
    thresholds = DEFAULT_THRESHOLDS if thresholds is None else np.asarray(thresholds, dtype=np.float64)

    # score >= t counts via binary search over the sorted pools
    tp = pos.size - np.searchsorted(pos, thresholds, side="left")
    fp = neg.size - np.searchsorted(neg, thresholds, side="left")
    fn = pos.size - tp
    pred_pos = tp + fp
    precision = np.where(pred_pos > 0, tp / np.maximum(pred_pos, 1), 1.0)
    recall = (tp / pos.size) if pos.size else np.zeros_like(tp, dtype=np.float64)
    return PRCurve(thresholds=thresholds, precision=precision, recall=np.asarray(recall, dtype=np.float64),
                   tp=tp, fp=fp, fn=fn)


def f_scores(pr):
    s = pr.precision + pr.recall
    return np.where(s > 0, 2 * pr.precision * pr.recall / np.where(s > 0, s, 1.0), 0.0)


def max_f_score(pr):
    """Maximum over thresholds of the harmonic mean of P and R."""
    if pr.thresholds.size == 0:
        raise ValueError("empty curve")
    return float(f_scores(pr).max())


def average_precision(pr):
    """Step integration of precision over recall after taking the
    monotonically non-increasing precision envelope."""
    if pr.thresholds.size == 0:
        raise ValueError("empty curve")
    order = np.argsort(pr.recall, kind="stable")
    rec = pr.recall[order]
    prec = pr.precision[order]
    env = np.maximum.accumulate(prec[::-1])[::-1]  # max precision at recall >= r
    prev = np.concatenate([[0.0], rec[:-1]])
    return float(np.sum((rec - prev) * env))


def exact_thresholds(pred_maps):
    """Every distinct predicted value (ascending), for exact sweeps."""
    vals = np.unique(np.concatenate([np.asarray(p, dtype=np.float64).ravel() for p in pred_maps]))
    return vals


def aop_baseline(train_masks, size=None):
    """Average ground-truth mask over the training frames (the location
    prior baseline). Masks of other sizes are resized nearest-neighbor."""
    if len(train_masks) == 0:
        raise ValueError("no masks to average")
    from .data import resize_nearest
    if size is None:
        size = np.asarray(train_masks[0]).shape
    acc = np.zeros(size, dtype=np.float64)
    for m in train_masks:
        m = np.asarray(m)
        if m.shape != tuple(size):
            m = resize_nearest(m, size)
        acc += m.astype(np.float64)
    return acc / len(train_masks)


def center_prior(h, w, sigma_frac=0.25):
    """Unnormalized Gaussian at the image center, peak value 1, with
    sigma a fraction of the image diagonal."""
    if sigma_frac <= 0:
        raise ValueError(f"sigma_frac must be positive, got {sigma_frac}")
    sigma = sigma_frac * np.hypot(h, w)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy = (np.arange(h) - cy)[:, None]
    xx = (np.arange(w) - cx)[None, :]
    return np.exp(-(yy ** 2 + xx ** 2) / (2 * sigma ** 2))


def point_to_mask(point, h, w, width=60.0, floor=1e-4):
    """Gaussian pseudo-mask around a clicked point.

    ``width`` is interpreted as two standard deviations; values below
    ``floor`` are truncated to exactly 0.
    """
    x, y = point
    if not (0 <= x < w and 0 <= y < h):
        raise ValueError(f"point {point} outside {w}x{h} image")
    sigma = width / 2.0
    yy = (np.arange(h) - y)[:, None]
    xx = (np.arange(w) - x)[None, :]
    g = np.exp(-(yy ** 2 + xx ** 2) / (2 * sigma ** 2))
    g[g < floor] = 0.0
    return g


@dataclass
class EvalReport:
    rows: list  # (scene, mf, ap)
    curves: dict  # scene -> PRCurve
    prob_maps: dict = None  # scene -> list of probability maps (optional)

    @property
    def mean_mf(self):
        return float(np.mean([r[1] for r in self.rows]))

    @property
    def mean_ap(self):
        return float(np.mean([r[2] for r in self.rows]))


def evaluate_maps(pred_maps, gt_masks, thresholds=None):
    pr = pr_curve(pred_maps, gt_masks, thresholds)
    return max_f_score(pr), average_precision(pr), pr


def write_report_csv(path, report):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene", "MF", "AP"])
        for scene, mf, ap in report.rows:
            writer.writerow([scene, repr(mf), repr(ap)])
        writer.writerow(["mean", repr(report.mean_mf), repr(report.mean_ap)])


def write_curve_csv(path, report):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene", "threshold", "precision", "recall", "tp", "fp", "fn"])
        for scene, curve in report.curves.items():
            for i in range(curve.thresholds.size):
                writer.writerow([scene, repr(float(curve.thresholds[i])),
                                 repr(float(curve.precision[i])), repr(float(curve.recall[i])),
                                 int(curve.tp[i]), int(curve.fp[i]), int(curve.fn[i])])


def write_pr_svg(path, report, size=420, margin=45):
    """Plot PR curves as plain SVG polylines (no plotting dependency)."""
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
               "#8c564b", "#e377c2", "#7f7f7f"]
    span = size - 2 * margin

    def px(r):
        return margin + r * span

    def py(p):
        return size - margin - p * span

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>',
             f'<line x1="{px(0)}" y1="{py(0)}" x2="{px(1)}" y2="{py(0)}" stroke="black"/>',
             f'<line x1="{px(0)}" y1="{py(0)}" x2="{px(0)}" y2="{py(1)}" stroke="black"/>',
             f'<text x="{px(0.5)}" y="{size - 8}" text-anchor="middle" font-size="13">recall</text>',
             f'<text x="12" y="{py(0.5)}" font-size="13" transform="rotate(-90 12 {py(0.5)})" '
             f'text-anchor="middle">precision</text>']
    for i, (scene, curve) in enumerate(report.curves.items()):
        color = palette[i % len(palette)]
        pts = " ".join(f"{px(r):.2f},{py(p):.2f}"
                       for r, p in zip(curve.recall, curve.precision))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{px(0.02)}" y="{margin + 14 * i}" font-size="11" '
                     f'fill="{color}">{scene}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
