"""Central finite-difference verification of the analytic loss gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import losses
from .errors import NonDifferentiablePoint

STEP = 1e-5
TOLERANCE = 1e-4


def finite_diff_check(func: Callable[[np.ndarray], float], x, analytic_grad,
                      step: float = STEP, tol: float = TOLERANCE) -> float:
    """Max over coordinates of ``|analytic - numeric| / max(1, |numeric|)``.

    ``analytic_grad`` is either the gradient array at ``x`` or a callable
    returning it.  Raises :class:`NonDifferentiablePoint` when one-sided
    differences disagree and the disagreement does not shrink with the step,
    i.e. ``x`` sits on a kink.
    """
    x = np.array(x, dtype=np.float64)
    grad = analytic_grad(x) if callable(analytic_grad) else analytic_grad
    grad = np.asarray(grad, dtype=np.float64).reshape(x.shape)
    f0 = func(x)
    worst = 0.0
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]

        def at(delta):
            flat[i] = orig + delta
            try:
                return func(x)
            finally:
                flat[i] = orig

        fp, fm = at(step), at(-step)
        numeric = (fp - fm) / (2 * step)
        scale = max(1.0, abs(numeric))
        asym = abs((fp - f0) - (f0 - fm)) / step / scale
        if asym > 10 * tol:
            small = step / 10
            asym_small = abs((at(small) - f0) - (f0 - at(-small))) / small / scale
            if asym_small > 0.5 * asym:
                raise NonDifferentiablePoint(
                    f"coordinate {i}: one-sided slopes differ by {asym:.3g} at step {step}"
                )
        worst = max(worst, abs(grad.reshape(-1)[i] - numeric) / scale)
    return worst


@dataclass(frozen=True)
class LossProbe:
    """Loss value/gradient pair over a single array argument plus a random probe sampler."""

    value: Callable
    grad: Callable
    sample: Callable[[np.random.Generator], tuple[np.ndarray, dict]]


def _sample_mask_pair(rng):
    pred = rng.uniform(0.05, 0.95, size=(4, 4))
    gt = (rng.uniform(size=(4, 4)) < 0.5).astype(float)
    return pred, {"gt": gt}


def _sample_ce(rng):
    logits = rng.uniform(-1, 1, size=6) * 0.05
    return logits, {"target": int(rng.integers(6)), "tau": 0.01}


def _sample_iou(rng):
    return rng.uniform(size=5), {"targets": rng.uniform(size=5)}


def _sample_match(rng):
    # clustered around one direction so the tau=0.01 softmax is not saturated
    common = rng.normal(size=8)
    emb = common + 0.05 * rng.normal(size=(3, 8))
    text = common + 0.05 * rng.normal(size=(5, 8))
    text /= np.linalg.norm(text, axis=1, keepdims=True)
    annotated = sorted(rng.choice(5, size=2, replace=False).tolist())
    return emb, {"text": text, "annotated": annotated, "tau": 0.01}


def _sample_sum(rng):
    return rng.normal(size=(2, 4, 4)), {}


LOSSES: dict[str, LossProbe] = {
    "dice": LossProbe(losses.dice_loss, losses.dice_loss_grad, _sample_mask_pair),
    "bce": LossProbe(losses.bce_loss, losses.bce_loss_grad, _sample_mask_pair),
    "ce": LossProbe(losses.ce_from_logits, losses.ce_from_logits_grad, _sample_ce),
    "iou_l2": LossProbe(losses.iou_l2_loss, losses.iou_l2_loss_grad, _sample_iou),
    "match": LossProbe(losses.match_loss, losses.match_loss_grad, _sample_match),
    "sum": LossProbe(losses.sum_loss, losses.sum_loss_grad, _sample_sum),
}


def check_loss(loss_id: str, x, **kwargs) -> float:
    """Finite-difference check of a registered loss at ``x``."""
    probe = LOSSES[loss_id]
    return finite_diff_check(lambda v: probe.value(v, **kwargs), x,
                             lambda v: probe.grad(v, **kwargs))


def check_loss_random(loss_id: str, seed: int, points: int = 1) -> float:
    """Worst relative error over ``points`` random probes drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        x, kwargs = LOSSES[loss_id].sample(rng)
        worst = max(worst, check_loss(loss_id, x, **kwargs))
    return worst
