"""Evaluation: mask IoU, panoptic quality, semantic mIoU, similarity statistics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CategoryOutOfRange, ShapeMismatch, TooFewCategories
from .tensor import as_tensor, cosine_similarity_matrix

VOID = 0
SEMANTIC_VOID = -1
MATCH_IOU = 0.5
HIST_BIN_WIDTH = 0.05


def mask_iou(a, b) -> float:
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


@dataclass
class CategoryPQ:
    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int


@dataclass
class PQReport:
    pq: float
    sq: float
    rq: float
    pq_things: float
    pq_stuff: float
    tp: int
    fp: int
    fn: int
    per_category: dict[int, CategoryPQ] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "pq": self.pq, "sq": self.sq, "rq": self.rq,
            "pq_things": self.pq_things, "pq_stuff": self.pq_stuff,
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "per_category": {
                str(c): vars(v) for c, v in sorted(self.per_category.items())
            },
        }


class PQAccumulator:
    """Per-category TP/FP/FN counts and matched-IoU sums across images.

    Accumulation is integer counts plus IoU sums, so images may be added in
    any order; division happens once in :meth:`report`.
    """

    def __init__(self, num_categories: int):
        self.num_categories = num_categories
        self.tp = np.zeros(num_categories, dtype=np.int64)
        self.fp = np.zeros(num_categories, dtype=np.int64)
        self.fn = np.zeros(num_categories, dtype=np.int64)
        self.iou_sum = np.zeros(num_categories)

    def merge(self, other: "PQAccumulator") -> "PQAccumulator":
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        self.iou_sum += other.iou_sum
        return self

    def add(self, pred, gt) -> "PQAccumulator":
        pred_map = np.asarray(pred.segment_map, dtype=np.int64)
        gt_map = np.asarray(gt.segment_map, dtype=np.int64)
        if pred_map.shape != gt_map.shape:
            raise ShapeMismatch(f"segment maps differ: {pred_map.shape} vs {gt_map.shape}")
        pred_cat = {s.id: s.category for s in pred.segments}
        gt_cat = {s.id: s.category for s in gt.segments}
        for c in list(pred_cat.values()) + list(gt_cat.values()):
            if not 0 <= c < self.num_categories:
                raise CategoryOutOfRange(f"category {c} outside [0, {self.num_categories})")

        pred_ids, pred_area = np.unique(pred_map, return_counts=True)
        gt_ids, gt_area = np.unique(gt_map, return_counts=True)
        pred_area = dict(zip(pred_ids.tolist(), pred_area.tolist()))
        gt_area = dict(zip(gt_ids.tolist(), gt_area.tolist()))

        stride = int(pred_map.max()) + 1
        pair_ids, pair_counts = np.unique(gt_map * stride + pred_map, return_counts=True)
        overlap = {(int(p // stride), int(p % stride)): int(n) for p, n in zip(pair_ids, pair_counts)}
        # predicted pixels on ground-truth void do not count against a segment
        pred_on_void = {pid: n for (gid, pid), n in overlap.items() if gid == VOID}

        matched_gt, matched_pred = set(), set()
        for (gid, pid), inter in sorted(overlap.items()):
            if gid == VOID or pid == VOID or gid not in gt_cat or pid not in pred_cat:
                continue
            if gt_cat[gid] != pred_cat[pid]:
                continue
            union = pred_area[pid] + gt_area[gid] - inter - pred_on_void.get(pid, 0)
            iou = inter / union
            if iou > MATCH_IOU:
                c = gt_cat[gid]
                self.tp[c] += 1
                self.iou_sum[c] += iou
                matched_gt.add(gid)
                matched_pred.add(pid)

        for gid, c in gt_cat.items():
            if gid not in matched_gt and gt_area.get(gid, 0) > 0:
                self.fn[c] += 1
        for pid, c in pred_cat.items():
            area = pred_area.get(pid, 0)
            if pid in matched_pred or area == 0:
                continue
            if pred_on_void.get(pid, 0) / area > MATCH_IOU:
                continue
            self.fp[c] += 1
        return self

    def category_stats(self, c: int) -> CategoryPQ:
        tp, fp, fn = int(self.tp[c]), int(self.fp[c]), int(self.fn[c])
        denom = tp + 0.5 * fp + 0.5 * fn
        pq = self.iou_sum[c] / denom if denom else 0.0
        sq = self.iou_sum[c] / tp if tp else 0.0
        rq = tp / denom if denom else 0.0
        return CategoryPQ(pq=float(pq), sq=float(sq), rq=float(rq), tp=tp, fp=fp, fn=fn)

    def report(self, thing_flags: Sequence[bool],
               categories: Sequence[int] | None = None) -> PQReport:
        """Average over ``categories`` or, by default, over every category seen."""
        if categories is None:
            categories = [c for c in range(self.num_categories)
                          if self.tp[c] + self.fp[c] + self.fn[c] > 0]
        per = {c: self.category_stats(c) for c in categories}

        def mean(values):
            values = list(values)
            return float(np.mean(values)) if values else 0.0

        things = [c for c in per if thing_flags[c]]
        stuff = [c for c in per if not thing_flags[c]]
        return PQReport(
            pq=mean(v.pq for v in per.values()),
            sq=mean(v.sq for v in per.values()),
            rq=mean(v.rq for v in per.values()),
            pq_things=mean(per[c].pq for c in things),
            pq_stuff=mean(per[c].pq for c in stuff),
            tp=int(self.tp.sum()), fp=int(self.fp.sum()), fn=int(self.fn.sum()),
            per_category=per,
        )


def panoptic_quality(pred, gt, num_categories: int, thing_flags: Sequence[bool]) -> PQReport:
    return PQAccumulator(num_categories).add(pred, gt).report(thing_flags)


class IoUAccumulator:
    """Semantic intersection/union pixel counts per class."""

    def __init__(self, num_categories: int):
        self.num_categories = num_categories
        self.inter = np.zeros(num_categories, dtype=np.int64)
        self.union = np.zeros(num_categories, dtype=np.int64)
        self.gt_pixels = np.zeros(num_categories, dtype=np.int64)

    def merge(self, other: "IoUAccumulator") -> "IoUAccumulator":
        self.inter += other.inter
        self.union += other.union
        self.gt_pixels += other.gt_pixels
        return self

    def add(self, pred_sem, gt_sem) -> "IoUAccumulator":
        pred = np.asarray(pred_sem, dtype=np.int64)
        gt = np.asarray(gt_sem, dtype=np.int64)
        if pred.shape != gt.shape:
            raise ShapeMismatch(f"semantic maps differ: {pred.shape} vs {gt.shape}")
        n = self.num_categories
        for arr in (pred, gt):
            bad = (arr != SEMANTIC_VOID) & ((arr < 0) | (arr >= n))
            if bad.any():
                raise CategoryOutOfRange(f"label outside [0, {n}) and not void")
        valid = gt != SEMANTIC_VOID
        p = np.where(valid, pred, SEMANTIC_VOID)
        g = gt
        for c in range(n):
            pc, gc = p == c, g == c
            self.inter[c] += np.count_nonzero(pc & gc)
            self.union[c] += np.count_nonzero(pc | gc)
            self.gt_pixels[c] += np.count_nonzero(gc)
        return self

    def result(self) -> tuple[float, np.ndarray]:
        per_class = np.full(self.num_categories, np.nan)
        nz = self.union > 0
        per_class[nz] = self.inter[nz] / self.union[nz]
        present = self.gt_pixels > 0
        miou = float(np.mean(per_class[present])) if present.any() else 0.0
        return miou, per_class


def mean_iou(pred_sem, gt_sem, num_categories: int) -> tuple[float, np.ndarray]:
    """mIoU over classes present in the ground truth; GT void pixels are ignored.

    The per-class vector holds NaN for classes absent from both maps.
    """
    return IoUAccumulator(num_categories).add(pred_sem, gt_sem).result()


@dataclass
class SimilarityStats:
    mu: float
    counts: np.ndarray
    edges: np.ndarray
    n_pairs: int

    def to_dict(self) -> dict:
        return {"mu": self.mu, "n_pairs": self.n_pairs, "bin_width": HIST_BIN_WIDTH,
                "counts": [int(c) for c in self.counts]}

    def rows(self):
        """(bin_low, bin_high, count) per histogram bin."""
        for lo, hi, n in zip(self.edges[:-1], self.edges[1:], self.counts):
            yield float(lo), float(hi), int(n)


def similarity_stats(embeddings) -> SimilarityStats:
    """Mean and histogram of the pairwise cosine similarities among categories."""
    e = as_tensor(embeddings, rank=2, name="embeddings")
    m = e.shape[0]
    if m < 2:
        raise TooFewCategories(f"need at least 2 categories, got {m}")
    sim = cosine_similarity_matrix(e, e)
    iu = np.triu_indices(m, k=1)
    pairs = sim[iu]
    n_bins = int(round(2.0 / HIST_BIN_WIDTH))
    edges = np.linspace(-1.0, 1.0, n_bins + 1)
    counts, _ = np.histogram(pairs, bins=edges)
    return SimilarityStats(mu=float(np.mean(pairs)), counts=counts, edges=edges, n_pairs=int(pairs.size))
