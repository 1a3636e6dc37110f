from __future__ import annotations

import math

import numpy as np
import pytest

from ovps import gradcheck, losses
from ovps.errors import EmptyAnnotation, IndexOutOfRange, LengthMismatch, NonDifferentiablePoint, ShapeMismatch


def test_dice_examples():
    assert losses.dice_loss(np.ones((2, 2)), np.ones((2, 2))) == 0.0
    assert losses.dice_loss(np.ones((2, 2)), np.zeros((2, 2))) == pytest.approx(1 - 1 / 5, abs=1e-15)
    assert losses.dice_loss(np.array([1.0, 1.0]), np.array([1.0, 0.0])) == pytest.approx(0.25, abs=1e-15)
    with pytest.raises(ShapeMismatch):
        losses.dice_loss(np.ones((2, 2)), np.ones((2, 3)))


def test_bce_examples(rng):
    assert losses.bce_loss(np.full((3, 3), 0.5), rng.integers(0, 2, (3, 3)).astype(float)) == pytest.approx(math.log(2), abs=1e-15)
    gt = rng.integers(0, 2, (4, 4)).astype(float)
    assert losses.bce_loss(gt, gt) < 1e-5
    assert losses.bce_loss(np.array([0.75]), np.array([1.0])) == pytest.approx(-math.log(0.75), abs=1e-15)


def test_ce_examples():
    assert losses.ce_classification_loss(np.array([1.0, 0, 0]), 0) < 1e-9
    assert losses.ce_classification_loss(np.full(4, 0.25), 2) == pytest.approx(math.log(4), abs=1e-15)
    assert losses.ce_classification_loss(np.array([0.0, 1.0]), 0) == pytest.approx(-math.log(1e-12))
    with pytest.raises(IndexOutOfRange):
        losses.ce_classification_loss(np.full(3, 1 / 3), 5)


def test_iou_l2_examples():
    assert losses.iou_l2_loss([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert losses.iou_l2_loss([0.5], [1.0]) == 0.25
    assert losses.iou_l2_loss([0.0, 1.0], [1.0, 0.0]) == 1.0
    with pytest.raises(LengthMismatch):
        losses.iou_l2_loss([0.5], [0.5, 0.5])


def test_match_examples():
    assert losses.match_loss([[1.0, 0.0]], [[0.6, 0.8]], [0]) == pytest.approx(0.0, abs=1e-15)
    assert losses.match_loss([[1.0, 0.0]], [[0.6, 0.8], [0.6, -0.8]], [0]) == pytest.approx(0.5, abs=1e-15)
    # with text = I, a row (cos t, sin t) has softmax p0 on category 0 when
    # cos t - sin t = tau ln(p0 / (1 - p0)), i.e. t = acos(d / sqrt 2) - pi / 4
    tau = 0.01
    text = np.eye(2)

    def row_for(p0):
        d = tau * math.log(p0 / (1 - p0))
        t = math.acos(d / math.sqrt(2)) - math.pi / 4
        return [math.cos(t), math.sin(t)]

    emb = np.array([row_for(0.9), row_for(0.1)])
    assert losses.match_loss(emb, text, [0], tau) == pytest.approx(0.1, abs=1e-9)
    with pytest.raises(EmptyAnnotation):
        losses.match_loss(emb, text, [], tau)


def test_match_duplicates_not_penalized(rng):
    emb, text = rng.normal(size=(3, 6)), rng.normal(size=(5, 6))
    text /= np.linalg.norm(text, axis=1, keepdims=True)
    base = losses.match_loss(emb, text, [1, 3], 0.05)
    dup = losses.match_loss(np.vstack([emb, emb[0], emb[2]]), text, [1, 3], 0.05)
    assert dup == pytest.approx(base, abs=1e-12)


def test_sum_examples():
    assert losses.sum_loss(np.zeros((2, 3, 3))) == 0.0
    assert losses.sum_loss(np.zeros((1, 3, 3))) == 0.25
    assert losses.sum_loss(np.full((1, 3, 3), 20.0)) < 1e-8
    # root-norm variant grows with resolution, mean-of-squares does not
    assert losses.sum_loss(np.zeros((1, 4, 4)), norm="l2") == pytest.approx(0.5 * 4, abs=1e-15)


def test_losses_nonnegative(rng):
    for _ in range(50):
        p, g = rng.uniform(size=(4, 4)), (rng.uniform(size=(4, 4)) < 0.5).astype(float)
        assert losses.dice_loss(p, g) >= 0 and losses.bce_loss(p, g) >= 0
        assert losses.sum_loss(rng.normal(size=(2, 3, 3))) >= 0


def test_complement_symmetry(rng):
    p = rng.uniform(0.05, 0.95, size=(4, 4))
    g = np.zeros((4, 4))
    g[:2] = 1  # balanced mask
    assert losses.bce_loss(1 - p, 1 - g) == pytest.approx(losses.bce_loss(p, g), abs=1e-12)
    pb = np.where(g == 1, 0.8, 0.2)
    assert losses.dice_loss(1 - pb, 1 - g) == pytest.approx(losses.dice_loss(pb, g), abs=1e-6)


def test_finite_diff_polynomial():
    err = gradcheck.finite_diff_check(lambda x: float(x[0] ** 2), np.array([3.0]), np.array([6.0]))
    assert err < 1e-8


def test_finite_diff_kink_detected():
    with pytest.raises(NonDifferentiablePoint):
        gradcheck.finite_diff_check(lambda x: float(abs(x[0])), np.array([0.0]), np.array([0.0]))


def test_finite_diff_spec_examples():
    rng = np.random.default_rng(7)
    assert gradcheck.check_loss("sum", rng.normal(size=(2, 4, 4))) < 1e-4
    rng = np.random.default_rng(7)
    emb, text = rng.normal(size=(3, 8)), rng.normal(size=(5, 8))
    text /= np.linalg.norm(text, axis=1, keepdims=True)
    assert gradcheck.check_loss("match", emb, text=text, annotated=[0, 3], tau=0.01) < 1e-4


@pytest.mark.parametrize("loss_id", sorted(gradcheck.LOSSES))
def test_each_loss_gradient(loss_id):
    assert gradcheck.check_loss_random(loss_id, seed=11, points=5) < 1e-4


def test_wrong_gradient_is_caught():
    x = np.random.default_rng(1).uniform(0.1, 0.9, size=(3, 3))
    g = np.ones((3, 3))
    good = losses.dice_loss_grad(x, g)
    assert gradcheck.finite_diff_check(lambda v: losses.dice_loss(v, g), x, good) < 1e-6
    assert gradcheck.finite_diff_check(lambda v: losses.dice_loss(v, g), x, 1.1 * good) > 1e-4
