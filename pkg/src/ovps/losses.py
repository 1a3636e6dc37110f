"""Training losses with hand-derived gradients.

Each ``*_grad`` function returns the gradient of the matching loss with respect
to its first argument.  They exist to be checked against finite differences,
not to train anything.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .errors import EmptyAnnotation, IndexOutOfRange, LengthMismatch, ShapeMismatch
from .tensor import as_tensor, sigmoid, tempered_softmax

DICE_SMOOTH = 1.0
BCE_CLAMP = 1e-7
CE_FLOOR = 1e-12


def _same_shape(a, b, what="pred/gt"):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{what} shapes differ: {a.shape} vs {b.shape}")
    return a, b


def dice_loss(pred, gt, smooth: float = DICE_SMOOTH) -> float:
    p, g = _same_shape(pred, gt)
    num = 2.0 * np.sum(p * g) + smooth
    den = np.sum(p) + np.sum(g) + smooth
    return float(1.0 - num / den)


def dice_loss_grad(pred, gt, smooth: float = DICE_SMOOTH) -> np.ndarray:
    p, g = _same_shape(pred, gt)
    num = 2.0 * np.sum(p * g) + smooth
    den = np.sum(p) + np.sum(g) + smooth
    return -(2.0 * g * den - num) / den**2


def bce_loss(pred, gt) -> float:
    p, g = _same_shape(pred, gt)
    p = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return float(np.mean(-(g * np.log(p) + (1.0 - g) * np.log1p(-p))))


def bce_loss_grad(pred, gt) -> np.ndarray:
    p, g = _same_shape(pred, gt)
    inside = (p > BCE_CLAMP) & (p < 1.0 - BCE_CLAMP)
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    grad = (-g / pc + (1.0 - g) / (1.0 - pc)) / p.size
    return np.where(inside, grad, 0.0)


def ce_classification_loss(probs_row, target: int) -> float:
    probs = as_tensor(probs_row, rank=1, name="probs_row")
    if abs(probs.sum() - 1.0) > 1e-6:
        raise ValueError(f"probabilities sum to {probs.sum()}, not 1")
    if not 0 <= target < probs.shape[0]:
        raise IndexOutOfRange(f"target {target} outside [0, {probs.shape[0]})")
    return float(-np.log(max(probs[target], CE_FLOOR)))


def ce_from_logits(logits_row, target: int, tau: float) -> float:
    """Cross-entropy of the tempered softmax; the form whose gradient is checked."""
    return ce_classification_loss(tempered_softmax(logits_row, tau), target)


def ce_from_logits_grad(logits_row, target: int, tau: float) -> np.ndarray:
    probs = tempered_softmax(logits_row, tau)
    onehot = np.zeros_like(probs)
    onehot[target] = 1.0
    return (probs - onehot) / tau


def iou_l2_loss(pred_scores, targets) -> float:
    p = np.asarray(pred_scores, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise LengthMismatch(f"{p.size} scores vs {t.size} targets")
    if p.size == 0:
        return 0.0
    return float(np.mean((p - t) ** 2))


def iou_l2_loss_grad(pred_scores, targets) -> np.ndarray:
    p = np.asarray(pred_scores, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise LengthMismatch(f"{p.size} scores vs {t.size} targets")
    return 2.0 * (p - t) / p.size


def _unit_rows(x):
    x = as_tensor(x, rank=2)
    norms = np.linalg.norm(x, axis=1)
    return x / norms[:, None], norms


def _match_parts(embeddings, text, annotated, tau):
    annotated = np.asarray(sorted(set(int(a) for a in annotated)), dtype=int)
    if annotated.size == 0:
        raise EmptyAnnotation("match loss needs at least one image-level label")
    e_hat, norms = _unit_rows(embeddings)
    t_hat, _ = _unit_rows(text)
    if e_hat.shape[1] != t_hat.shape[1]:
        raise ShapeMismatch(f"embedding width {e_hat.shape[1]} != text width {t_hat.shape[1]}")
    if annotated.min() < 0 or annotated.max() >= t_hat.shape[0]:
        raise IndexOutOfRange(f"annotated labels must index {t_hat.shape[0]} categories")
    # softmax across categories for each prediction; best prediction per label
    probs = tempered_softmax(e_hat @ t_hat.T, tau)
    winners = np.argmax(probs[:, annotated], axis=0)
    return annotated, e_hat, norms, t_hat, probs, winners


def match_loss(embeddings, text, annotated: Iterable[int], tau: float = 0.01) -> float:
    """Image-level label loss: every annotated category should win some prediction.

    Duplicate predictions for one label cost nothing because only the best
    prediction per label enters the average.
    """
    annotated, _, _, _, probs, winners = _match_parts(embeddings, text, annotated, tau)
    return float(1.0 - probs[winners, annotated].mean())


def match_loss_grad(embeddings, text, annotated: Iterable[int], tau: float = 0.01) -> np.ndarray:
    annotated, e_hat, norms, t_hat, probs, winners = _match_parts(embeddings, text, annotated, tau)
    c = annotated.size
    g_sim = np.zeros_like(probs)
    for i, j in zip(winners, annotated):
        # d P[i, j] / d S[i, :] = P[i, j] * (onehot_j - P[i, :]) / tau
        row = probs[i, j] * probs[i] / tau
        row[j] -= probs[i, j] / tau
        g_sim[i] += row / c
    g_hat = g_sim @ t_hat
    # back through row normalization
    radial = np.einsum("ij,ij->i", g_hat, e_hat)
    return (g_hat - e_hat * radial[:, None]) / norms[:, None]


def sum_loss(mask_logits, norm: str = "mse") -> float:
    """Penalty for sigmoid masks that fail to tile the image exactly once.

    ``norm="mse"`` averages the squared per-pixel residual; ``norm="l2"`` is the
    root of the summed squares, which grows with image size.
    """
    x = as_tensor(mask_logits, rank=3, name="mask_logits")
    d = 1.0 - sigmoid(x).sum(axis=0)
    if norm == "mse":
        return float(np.mean(d**2))
    if norm == "l2":
        return float(np.sqrt(np.sum(d**2)))
    raise ValueError(f"unknown norm {norm!r}")


def sum_loss_grad(mask_logits, norm: str = "mse") -> np.ndarray:
    x = as_tensor(mask_logits, rank=3, name="mask_logits")
    s = sigmoid(x)
    d = 1.0 - s.sum(axis=0)
    ds = s * (1.0 - s)
    if norm == "mse":
        return -2.0 * d[None] * ds / d.size
    if norm == "l2":
        total = np.sqrt(np.sum(d**2))
        if total == 0:
            return np.zeros_like(x)
        return -d[None] * ds / total
    raise ValueError(f"unknown norm {norm!r}")
