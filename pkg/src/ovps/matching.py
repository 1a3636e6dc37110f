"""Bipartite target assignment and IoU-head regression targets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import CategoryOutOfRange, NonFiniteCost, ShapeMismatch
from .losses import BCE_CLAMP, DICE_SMOOTH
from .metrics import mask_iou


@dataclass(frozen=True, eq=False)
class GroundTruthSet:
    masks: np.ndarray
    category_ids: np.ndarray

    def __post_init__(self):
        masks = np.asarray(self.masks, dtype=np.float64)
        cats = np.asarray(self.category_ids, dtype=np.int64).ravel()
        if masks.ndim != 3 or masks.shape[0] != cats.shape[0]:
            raise ShapeMismatch(f"masks {masks.shape} vs {cats.shape[0]} category ids")
        if not np.all((masks == 0) | (masks == 1)):
            raise ValueError("ground-truth masks must be binary")
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "category_ids", cats)

    def __len__(self) -> int:
        return self.masks.shape[0]


@dataclass(frozen=True)
class Assignment:
    pairs: tuple[tuple[int, int], ...]
    unmatched_predictions: tuple[int, ...]

    def match_of(self, k: int) -> int | None:
        for p, g in self.pairs:
            if p == k:
                return g
        return None


@dataclass(frozen=True)
class LossWeights:
    """Matching-cost and loss weights.

    ``w_ce``, ``w_dice`` and ``w_bce`` follow common mask-classification defaults; ``w_match``
    and ``w_sum`` weight the image-level and mask-tiling losses.
    """

    w_ce: float = 2.0
    w_dice: float = 5.0
    w_bce: float = 5.0
    w_iou: float = 1.0
    w_match: float = 1.0
    w_sum: float = 0.4

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"{name} must be nonnegative, got {value}")


def assignment_cost_matrix(pred_probs, pred_masks, gts: GroundTruthSet,
                           weights: LossWeights = LossWeights()) -> np.ndarray:
    """K x G cost: negative class probability plus pairwise dice and BCE."""
    probs = np.asarray(pred_probs, dtype=np.float64)
    masks = np.asarray(pred_masks, dtype=np.float64)
    if probs.ndim != 2 or masks.ndim != 3 or probs.shape[0] != masks.shape[0]:
        raise ShapeMismatch(f"pred_probs {probs.shape} vs pred_masks {masks.shape}")
    if masks.shape[1:] != gts.masks.shape[1:]:
        raise ShapeMismatch(f"pred masks {masks.shape[1:]} vs gt masks {gts.masks.shape[1:]}")
    if len(gts) and (gts.category_ids.min() < 0 or gts.category_ids.max() >= probs.shape[1]):
        raise CategoryOutOfRange(f"gt category ids must index {probs.shape[1]} classes")
    k, g = masks.shape[0], len(gts)
    p = masks.reshape(k, -1)
    t = gts.masks.reshape(g, -1)

    cost_class = -probs[:, gts.category_ids]

    inter = p @ t.T
    cost_dice = 1.0 - (2.0 * inter + DICE_SMOOTH) / (
        p.sum(axis=1)[:, None] + t.sum(axis=1)[None, :] + DICE_SMOOTH
    )

    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    cost_bce = -(np.log(pc) @ t.T + np.log1p(-pc) @ (1.0 - t).T) / p.shape[1]

    cost = weights.w_ce * cost_class + weights.w_dice * cost_dice + weights.w_bce * cost_bce
    if not np.all(np.isfinite(cost)):
        raise NonFiniteCost("assignment cost is not finite")
    return cost


def _lsa_total(cost: np.ndarray) -> float:
    if cost.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(cost)
    return math.fsum(cost[rows, cols])


def hungarian(cost) -> Assignment:
    """Minimum-cost one-to-one assignment of size ``min(K, G)``.

    Among optimal assignments the lexicographically smallest pair list is
    returned: rows are fixed in order, each to the lowest column that still
    admits an optimal completion.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ShapeMismatch(f"cost must be rank 2, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise NonFiniteCost("cost matrix has NaN or Inf entries")
    k, g = c.shape
    n = min(k, g)
    if n == 0:
        return Assignment(pairs=(), unmatched_predictions=tuple(range(k)))

    best = _lsa_total(c)
    tol = 1e-12 * max(1.0, abs(best), float(np.abs(c).max()))
    pairs: list[tuple[int, int]] = []
    fixed_cost: list[float] = []
    free_cols = list(range(g))
    for i in range(k):
        if len(pairs) == n:
            break
        rest_rows = list(range(i + 1, k))
        need = n - len(pairs) - 1
        for j in free_cols:
            rest_cols = [col for col in free_cols if col != j]
            if len(rest_rows) < need:
                continue
            sub = c[np.ix_(rest_rows, rest_cols)] if need else np.empty((0, 0))
            total = math.fsum(fixed_cost + [c[i, j], _lsa_total(sub)])
            if total <= best + tol:
                pairs.append((i, j))
                fixed_cost.append(c[i, j])
                free_cols = rest_cols
                break
    matched = {p for p, _ in pairs}
    return Assignment(pairs=tuple(pairs),
                      unmatched_predictions=tuple(r for r in range(k) if r not in matched))


def iou_targets(assignment: Assignment, pred_masks_binary, gts: GroundTruthSet) -> np.ndarray:
    """IoU with the matched ground truth per proposal; unmatched proposals get 0."""
    masks = np.asarray(pred_masks_binary)
    if masks.ndim != 3 or masks.shape[1:] != gts.masks.shape[1:]:
        raise ShapeMismatch(f"pred masks {masks.shape} vs gt masks {gts.masks.shape}")
    targets = np.zeros(masks.shape[0])
    for p, g in assignment.pairs:
        targets[p] = mask_iou(masks[p], gts.masks[g])
    return targets
