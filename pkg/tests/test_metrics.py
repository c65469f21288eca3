"""PR/MF/AP against exhaustive enumeration and rank-based oracles."""

import numpy as np
import pytest

from egonet import metrics as M


def brute_force_curve(pred, gt, thresholds):
    """Direct per-threshold counting over the pooled pixels."""
    pred = np.concatenate([np.asarray(p, dtype=float).ravel() for p in pred])
    gt = np.concatenate([np.asarray(g, dtype=bool).ravel() for g in gt])
    P, R = [], []
    for t in thresholds:
        pos = pred >= t
        tp = int(np.sum(pos & gt))
        fp = int(np.sum(pos & ~gt))
        fn = int(np.sum(~pos & gt))
        P.append(tp / (tp + fp) if tp + fp else 1.0)
        R.append(tp / (tp + fn) if tp + fn else 0.0)
    return np.array(P), np.array(R)


def brute_force_mf(pred, gt, thresholds):
    P, R = brute_force_curve(pred, gt, thresholds)
    s = P + R
    f = np.where(s > 0, 2 * P * R / np.where(s > 0, s, 1), 0.0)
    return f.max()


def rank_based_ap(pred, gt):
    """Envelope AP from the ranked pixel list (distinct scores assumed)."""
    pred = np.concatenate([np.asarray(p, dtype=float).ravel() for p in pred])
    gt = np.concatenate([np.asarray(g, dtype=bool).ravel() for g in gt])
    order = np.argsort(-pred, kind="stable")
    rel = gt[order]
    npos = rel.sum()
    if npos == 0:
        return 0.0
    prec_at_rank = np.cumsum(rel) / np.arange(1, rel.size + 1)
    env = np.maximum.accumulate(prec_at_rank[::-1])[::-1]
    return float(env[rel].sum() / npos)


def random_instance(rng):
    n = int(rng.integers(2, 17))
    pred = rng.random(n)
    while np.unique(pred).size < n:  # distinct scores keep the rank oracle exact
        pred = rng.random(n)
    gt = rng.random(n) < rng.uniform(0.1, 0.9)
    return [pred.reshape(1, n)], [gt.reshape(1, n)]


class TestAgainstOracles:
    def test_100_random_small_instances(self):
        rng = np.random.default_rng(77)
        for trial in range(100):
            pred, gt = random_instance(rng)
            thresholds = np.unique(np.concatenate([p.ravel() for p in pred]))
            pr = M.pr_curve(pred, gt, thresholds)
            P, R = brute_force_curve(pred, gt, thresholds)
            np.testing.assert_allclose(pr.precision, P, atol=1e-12)
            np.testing.assert_allclose(pr.recall, R, atol=1e-12)
            assert abs(M.max_f_score(pr) - brute_force_mf(pred, gt, thresholds)) < 1e-12
            assert abs(M.average_precision(pr) - rank_based_ap(pred, gt)) < 1e-12

    def test_worked_2x2_example(self):
        pred = [np.array([[0.9, 0.6], [0.4, 0.1]])]
        gt = [np.array([[False, True], [False, False]])]
        pr = M.pr_curve(pred, gt, thresholds=np.array([0.5, 0.7]))
        assert pr.precision[0] == 0.5 and pr.recall[0] == 1.0
        assert pr.precision[1] == 0.0 and pr.recall[1] == 0.0
        full = M.pr_curve(pred, gt, thresholds=M.exact_thresholds(pred))
        assert M.max_f_score(full) == pytest.approx(2 / 3, abs=1e-12)
        assert M.average_precision(full) == pytest.approx(0.5, abs=1e-12)


class TestPRCurve:
    def test_perfect_prediction(self):
        gt = [np.array([[True, False], [False, True]])]
        pred = [g.astype(float) for g in gt]
        pr = M.pr_curve(pred, gt)
        inner = (pr.thresholds > 0) & (pr.thresholds <= 1)
        assert np.all(pr.precision[inner] == 1.0)
        assert np.all(pr.recall[inner] == 1.0)
        assert M.max_f_score(pr) == 1.0
        assert M.average_precision(pr) == 1.0

    def test_empty_gt_convention(self, rng):
        pred = [rng.random((4, 4))]
        gt = [np.zeros((4, 4), bool)]
        pr = M.pr_curve(pred, gt)
        assert np.all(pr.recall == 0.0)
        assert M.max_f_score(pr) == 0.0

    def test_constant_prediction_formula(self):
        # constant map at 0.5 with positive fraction q: MF = 2q / (1 + q)
        gt = np.zeros((10, 10), bool)
        gt[:4] = True  # q = 0.4
        pr = M.pr_curve([np.full((10, 10), 0.5)], [gt])
        assert M.max_f_score(pr) == pytest.approx(2 * 0.4 / 1.4, abs=1e-12)

    def test_recall_monotone_nonincreasing(self, rng):
        for _ in range(10):
            pred = [rng.random((6, 6)) for _ in range(3)]
            gt = [rng.random((6, 6)) < 0.3 for _ in range(3)]
            pr = M.pr_curve(pred, gt)
            assert np.all(np.diff(pr.recall) <= 1e-15)

    def test_pooling_is_dataset_level(self):
        # one perfect frame + one inverted frame: pooled counts differ from
        # any per-frame average
        gt = [np.array([[True, False]]), np.array([[True, False]])]
        pred = [np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])]
        pr = M.pr_curve(pred, gt, thresholds=np.array([0.5]))
        assert pr.tp[0] == 1 and pr.fp[0] == 1 and pr.fn[0] == 1
        assert pr.precision[0] == 0.5 and pr.recall[0] == 0.5

    def test_size_mismatch_rejected(self, rng):
        with pytest.raises(ValueError):
            M.pr_curve([rng.random((2, 2))], [np.zeros((2, 3), bool)])

    def test_mf_invariant_to_monotone_transform(self, rng):
        pred = [rng.random((8, 8))]
        gt = [rng.random((8, 8)) < 0.2]
        a = M.max_f_score(M.pr_curve(pred, gt, M.exact_thresholds(pred)))
        squared = [p ** 2 for p in pred]
        b = M.max_f_score(M.pr_curve(squared, gt, M.exact_thresholds(squared)))
        assert a == pytest.approx(b, abs=1e-12)

    def test_ap_invariant_to_small_constant_shift(self, rng):
        pred = [np.round(rng.random((8, 8)), 3)]
        gt = [rng.random((8, 8)) < 0.25]
        gaps = np.diff(np.unique(pred[0]))
        delta = gaps[gaps > 0].min() / 10
        a = M.average_precision(M.pr_curve(pred, gt, M.exact_thresholds(pred)))
        shifted = [pred[0] + delta]
        b = M.average_precision(M.pr_curve(shifted, gt, M.exact_thresholds(shifted)))
        assert a == pytest.approx(b, abs=1e-12)

    def test_random_scores_ap_approaches_positive_rate(self):
        rng = np.random.default_rng(5)
        q = 0.3
        pred = [rng.random((100, 100))]
        gt = [rng.random((100, 100)) < q]
        ap = M.average_precision(M.pr_curve(pred, gt, M.exact_thresholds(pred)))
        assert abs(ap - gt[0].mean()) < 0.02


class TestBaselines:
    def test_aop_mean_of_masks(self):
        masks = [np.ones((3, 3), bool), np.zeros((3, 3), bool)]
        np.testing.assert_allclose(M.aop_baseline(masks), 0.5)

    def test_aop_single_mask_identity(self, rng):
        m = rng.random((4, 4)) < 0.4
        np.testing.assert_allclose(M.aop_baseline([m]), m.astype(float))

    def test_aop_matches_direct_summation(self, rng):
        masks = [rng.random((6, 6)) < 0.5 for _ in range(100)]
        want = np.mean([m.astype(float) for m in masks], axis=0)
        np.testing.assert_allclose(M.aop_baseline(masks), want, atol=1e-12)

    def test_center_prior_peak_symmetry_and_sigma(self):
        g = M.center_prior(21, 21, sigma_frac=0.25)
        assert g[10, 10] == 1.0
        np.testing.assert_allclose(g, g[::-1], atol=1e-15)
        np.testing.assert_allclose(g, g[:, ::-1], atol=1e-15)
        sigma = 0.25 * np.hypot(21, 21)
        d = int(round(sigma))
        expect = np.exp(-d ** 2 / (2 * sigma ** 2))
        assert g[10, 10 + d] == pytest.approx(expect, rel=1e-12)

    def test_point_to_mask(self):
        g = M.point_to_mask((40, 30), h=80, w=80, width=60)
        assert g[30, 40] == 1.0
        assert g[30 + 30, 40] == pytest.approx(np.exp(-0.5), rel=1e-12)
        assert g[0, 0] == 0.0  # far corner truncated to exactly zero
        with pytest.raises(ValueError):
            M.point_to_mask((90, 30), h=80, w=80)


def test_report_csv_round_trip(tmp_path, rng):
    pred = [rng.random((4, 4))]
    gt = [rng.random((4, 4)) < 0.4]
    mf, ap, pr = M.evaluate_maps(pred, gt)
    rep = M.EvalReport(rows=[("sceneA", mf, ap)], curves={"sceneA": pr})
    M.write_report_csv(tmp_path / "r.csv", rep)
    M.write_curve_csv(tmp_path / "c.csv", rep)
    M.write_pr_svg(tmp_path / "p.svg", rep)
    lines = (tmp_path / "r.csv").read_text().strip().splitlines()
    assert lines[0] == "scene,MF,AP"
    assert lines[-1].startswith("mean,")
    assert "<svg" in (tmp_path / "p.svg").read_text()
    assert len((tmp_path / "c.csv").read_text().strip().splitlines()) == 102
