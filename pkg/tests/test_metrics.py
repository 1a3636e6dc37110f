from __future__ import annotations

import math

import numpy as np
import pytest

from ovps.errors import CategoryOutOfRange, ShapeMismatch, TooFewCategories
from ovps.metrics import PQAccumulator, mask_iou, mean_iou, panoptic_quality, similarity_stats

from helpers import panoptic

R = 1 / math.sqrt(2)


def pq_oracle(pred_map, pred_cat, gt_map, gt_cat):
    """Per-category PQ written directly from the definition with Python sets of pixel coordinates."""
    def pixels(m, i):
        return {(y, x) for y, x in zip(*np.nonzero(np.asarray(m) == i))}

    void = pixels(gt_map, 0)
    stats = {}
    matched_p, matched_g = set(), set()
    for g, cg in gt_cat.items():
        G = pixels(gt_map, g)
        for p, cp in pred_cat.items():
            if cp != cg:
                continue
            P = pixels(pred_map, p) - void
            iou = len(P & G) / len(P | G) if P | G else 0.0
            if iou > 0.5:
                s = stats.setdefault(cg, [0, 0, 0, 0.0])
                s[0] += 1
                s[3] += iou
                matched_p.add(p)
                matched_g.add(g)
    for g, c in gt_cat.items():
        if g not in matched_g:
            stats.setdefault(c, [0, 0, 0, 0.0])[2] += 1
    for p, c in pred_cat.items():
        P = pixels(pred_map, p)
        if p in matched_p or not P or len(P & void) / len(P) > 0.5:
            continue
        stats.setdefault(c, [0, 0, 0, 0.0])[1] += 1
    return {c: s[3] / (s[0] + 0.5 * s[1] + 0.5 * s[2]) for c, s in stats.items()}


def test_mask_iou_examples(rng):
    a = np.zeros((4, 4))
    a[0] = 1
    assert mask_iou(a, a) == 1.0
    assert mask_iou(a, np.roll(a, 1, axis=0)) == 0.0
    b = np.zeros((4, 4))
    b[0, :2] = b[1, :2] = 1
    assert mask_iou(a, b) == pytest.approx(2 / 6, abs=1e-15)
    assert mask_iou(np.zeros((2, 2)), np.zeros((2, 2))) == 0.0
    with pytest.raises(ShapeMismatch):
        mask_iou(a, np.zeros((3, 3)))
    for _ in range(50):
        x, y = rng.integers(0, 2, (5, 5)), rng.integers(0, 2, (5, 5))
        assert mask_iou(x, y) == mask_iou(y, x) and 0 <= mask_iou(x, y) <= 1


def test_pq_identity():
    p = panoptic([[1, 1], [1, 0]], {1: 0})
    r = panoptic_quality(p, p, 1, [True])
    assert r.pq == r.sq == r.rq == 1.0


def test_pq_tp_plus_fn():
    gt = np.zeros((4, 5), dtype=int)
    gt[:2, :] = 1  # 10 pixels
    gt[3, :2] = 2  # a second segment of the same category, never predicted
    pred = np.zeros((4, 5), dtype=int)
    pred[:2, :4] = 1  # 8 of 10 pixels -> IoU 0.8
    r = panoptic_quality(panoptic(pred, {1: 0}), panoptic(gt, {1: 0, 2: 0}), 1, [True])
    assert r.sq == pytest.approx(0.8, abs=1e-12)
    assert r.rq == pytest.approx(2 / 3, abs=1e-12)
    assert r.pq == pytest.approx(0.8 / 1.5, abs=1e-12)
    assert r.pq == pytest.approx(0.5333, abs=1e-4)


def test_pq_half_iou_boundary():
    gt = np.zeros((2, 4), dtype=int)
    gt[0] = 1
    pred = np.zeros((2, 4), dtype=int)
    pred[0, :2] = 1
    r = panoptic_quality(panoptic(pred, {1: 0}), panoptic(gt, {1: 0}), 1, [True])
    assert r.pq == 0.0 and r.tp == 0


def test_pq_void_handling():
    gt = np.zeros((4, 4), dtype=int)
    gt[:2] = 1
    pred = np.zeros((4, 4), dtype=int)
    pred[:3] = 1  # spills onto void: excluded from the union -> IoU 1
    r = panoptic_quality(panoptic(pred, {1: 0}), panoptic(gt, {1: 0}), 1, [True])
    assert r.pq == 1.0
    mostly_void = np.zeros((4, 4), dtype=int)
    mostly_void[2:, :] = 2
    r = panoptic_quality(panoptic(mostly_void, {2: 0}), panoptic(gt, {1: 0}), 1, [True])
    assert r.fp == 0 and r.fn == 1


def test_pq_errors():
    p = panoptic([[1]], {1: 3})
    with pytest.raises(CategoryOutOfRange):
        panoptic_quality(p, p, 2, [True, True])
    with pytest.raises(ShapeMismatch):
        panoptic_quality(panoptic([[1]], {1: 0}), panoptic([[1, 1]], {1: 0}), 1, [True])


def random_scene(rng, h=10, w=10, cats=3):
    def one():
        m = np.zeros((h, w), dtype=int)
        table = {}
        for i in range(1, rng.integers(2, 6)):
            t, l = rng.integers(0, h - 2, 2)
            m[t:t + rng.integers(2, 6), l:l + rng.integers(2, 6)] = i
        for i in np.unique(m):
            if i:
                table[int(i)] = int(rng.integers(0, cats))
        return m, table
    return one(), one()


def test_pq_against_set_oracle(rng):
    for _ in range(100):
        (pm, pc), (gm, gc) = random_scene(rng)
        report = panoptic_quality(panoptic(pm, pc), panoptic(gm, gc), 3, [True, False, True])
        oracle = pq_oracle(pm, pc, gm, gc)
        assert set(report.per_category) == set(oracle)
        for c, v in oracle.items():
            assert report.per_category[c].pq == pytest.approx(v, abs=1e-12)


def test_pq_relabel_invariance(rng):
    for _ in range(30):
        (pm, pc), (gm, gc) = random_scene(rng)
        base = panoptic_quality(panoptic(pm, pc), panoptic(gm, gc), 3, [True] * 3)
        ids = sorted(pc)
        perm = dict(zip(ids, rng.permutation(ids) + 10))
        pm2 = np.vectorize(lambda v: perm.get(v, 0))(pm)
        pc2 = {perm[i]: c for i, c in pc.items()}
        other = panoptic_quality(panoptic(pm2, pc2), panoptic(gm, gc), 3, [True] * 3)
        assert other.pq == pytest.approx(base.pq, abs=1e-15)


def test_accumulator_order_independent(rng):
    scenes = [random_scene(rng) for _ in range(12)]
    def run(order):
        acc = PQAccumulator(3)
        for i in order:
            (pm, pc), (gm, gc) = scenes[i]
            acc.add(panoptic(pm, pc), panoptic(gm, gc))
        return acc.report([True] * 3)
    a, b = run(range(12)), run(rng.permutation(12))
    assert a.pq == pytest.approx(b.pq, abs=1e-12) and (a.tp, a.fp, a.fn) == (b.tp, b.fp, b.fn)
    halves = PQAccumulator(3)
    for part in (range(6), range(6, 12)):
        sub = PQAccumulator(3)
        for i in part:
            (pm, pc), (gm, gc) = scenes[i]
            sub.add(panoptic(pm, pc), panoptic(gm, gc))
        halves.merge(sub)
    assert halves.report([True] * 3).pq == pytest.approx(a.pq, abs=1e-12)


def test_pq_fixed_category_list():
    p = panoptic([[1]], {1: 0})
    acc = PQAccumulator(3).add(p, p)
    assert acc.report([True] * 3).pq == 1.0
    assert acc.report([True] * 3, categories=[0, 1, 2]).pq == pytest.approx(1 / 3)


def test_mean_iou_examples():
    gt = np.array([[0, 0], [1, 1]])
    assert mean_iou(gt, gt, 2)[0] == 1.0
    assert mean_iou(1 - gt, gt, 2)[0] == 0.0
    g = np.full((4, 4), 1)
    g[:2] = 0  # class 0: 8 pixels
    p = np.full((4, 4), 1)
    p[0] = 0  # covers 4 of them
    miou, per = mean_iou(p, g, 2)
    assert per[0] == 0.5
    # void pixels in the ground truth are ignored
    gv = gt.copy()
    gv[0, 0] = -1
    assert mean_iou(np.array([[1, 0], [1, 1]]), gv, 2)[0] == 1.0
    _, per = mean_iou(gt, gt, 3)
    assert math.isnan(per[2])


def test_similarity_examples():
    s = similarity_stats(np.eye(2))
    assert s.mu == 0.0 and s.n_pairs == 1
    s = similarity_stats(np.ones((3, 4)))
    assert s.mu == 1.0 and s.n_pairs == 3
    s = similarity_stats([[1, 0], [0, 1], [R, R]])
    assert s.mu == pytest.approx(2 * R / 3, abs=1e-12)
    assert s.mu == pytest.approx(0.4714, abs=1e-3)
    with pytest.raises(TooFewCategories):
        similarity_stats([[1.0, 0.0]])


def test_similarity_histogram(rng):
    e = rng.normal(size=(9, 5))
    s = similarity_stats(e)
    assert s.counts.sum() == s.n_pairs == 36 and len(s.counts) == 40
    np.testing.assert_allclose(np.diff(s.edges), 0.05, atol=1e-12)
    assert similarity_stats(e[rng.permutation(9)]).mu == pytest.approx(s.mu, abs=1e-12)
    rows = list(s.rows())
    assert rows[0][0] == -1.0 and rows[-1][1] == 1.0
