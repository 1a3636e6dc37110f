from __future__ import annotations

import math

import numpy as np
import pytest

from ovps.adapter import (
    AdapterWeights, CrossAttentionWeights, SpatialFeatureMap, binarize_masks, cross_attend, mask_pool,
    resize_bilinear, spatial_project,
)
from ovps.errors import EmptyMask, ShapeMismatch


def crop_and_average(projected, masks):
    """Independent oracle: per proposal, slice the mask's bounding box and average explicitly."""
    out = []
    for m in masks:
        ys, xs = np.nonzero(m)
        t, b, l, r = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
        crop_f = projected[t:b, l:r]
        crop_m = m[t:b, l:r]
        acc = np.zeros(projected.shape[2])
        total = 0.0
        for i in range(crop_m.shape[0]):
            for j in range(crop_m.shape[1]):
                acc += crop_m[i, j] * crop_f[i, j]
                total += crop_m[i, j]
        v = acc / total
        out.append(v / math.sqrt(sum(x * x for x in v)))
    return np.array(out)


def test_spatial_project_examples(rng):
    x = rng.normal(size=(3, 4, 5))
    np.testing.assert_array_equal(spatial_project(SpatialFeatureMap(x), AdapterWeights.identity(5)), x)
    zero = AdapterWeights(np.zeros((5, 3)), np.zeros(3), np.zeros((3, 2)), np.zeros(2))
    assert np.all(spatial_project(SpatialFeatureMap(x), zero) == 0)
    w = AdapterWeights([[2, 0], [0, 1]], [0, 0], np.eye(2), [0, 0])
    np.testing.assert_array_equal(spatial_project(SpatialFeatureMap([[[1, 2]]]), w), [[[2, 2]]])


def test_spatial_project_positional_and_mismatch(rng):
    x, pos = rng.normal(size=(2, 2, 3)), rng.normal(size=(2, 2, 3))
    out = spatial_project(SpatialFeatureMap(x, pos), AdapterWeights.identity(3))
    np.testing.assert_allclose(out, x + pos, atol=1e-15)
    with pytest.raises(ShapeMismatch):
        spatial_project(SpatialFeatureMap(x), AdapterWeights.identity(4))
    with pytest.raises(ShapeMismatch):
        AdapterWeights(np.eye(3), np.zeros(3), np.eye(4), np.zeros(4))


def test_positional_resized_bilinearly():
    pos = np.arange(4.0).reshape(2, 2, 1)
    fmap = SpatialFeatureMap(np.zeros((4, 4, 1)), pos)
    assert fmap.positional.shape == (4, 4, 1)
    # corners clamp to the source corners; interior interpolates
    assert fmap.positional[0, 0, 0] == 0.0 and fmap.positional[3, 3, 0] == 3.0
    np.testing.assert_allclose(resize_bilinear(pos, 2, 2), pos)


def test_mask_pool_examples():
    proj = np.array([[[1.0, 0.0], [0.0, 1.0]]])
    r = 1 / math.sqrt(2)
    np.testing.assert_allclose(mask_pool(proj, np.ones((1, 1, 2))), [[r, r]], atol=1e-15)
    np.testing.assert_allclose(mask_pool(proj, np.array([[[0.0, 1.0]]])), [[0.0, 1.0]], atol=1e-15)
    with pytest.raises(EmptyMask):
        mask_pool(proj, np.zeros((1, 1, 2)))


def test_mask_pool_scale_invariance_and_global_average(rng):
    proj = rng.normal(size=(5, 6, 4))
    m = rng.uniform(size=(3, 5, 6))
    np.testing.assert_allclose(mask_pool(proj, m * 0.5), mask_pool(proj, m), atol=1e-12)
    g = proj.reshape(-1, 4).mean(axis=0)
    np.testing.assert_allclose(mask_pool(proj, np.ones((1, 5, 6)))[0], g / np.linalg.norm(g), atol=1e-12)


@pytest.mark.parametrize("mode", ["soft", "binary"])
def test_mask_pool_matches_crop_oracle(mode, rng):
    for _ in range(20):
        proj = rng.normal(size=(6, 7, 5))
        logits = rng.normal(scale=3, size=(4, 6, 7))
        masks = binarize_masks(logits) if mode == "binary" else 1 / (1 + np.exp(-logits))
        masks[:, 0, 0] = 1.0  # guarantee non-empty
        np.testing.assert_allclose(mask_pool(proj, masks), crop_and_average(proj, masks), atol=1e-9)


def test_binarize_examples():
    assert binarize_masks(np.zeros((1, 1, 1)))[0, 0, 0] == 1
    assert binarize_masks(np.full((1, 1, 1), -3.0))[0, 0, 0] == 0
    assert binarize_masks(np.full((1, 1, 1), 3.0), threshold=0.9)[0, 0, 0] == 1


def test_cross_attend_residual_and_single_location(rng):
    q = rng.normal(size=(3, 4))
    proj = rng.normal(size=(2, 2, 4))
    w = CrossAttentionWeights(rng.normal(size=(4, 2)), rng.normal(size=(4, 2)), np.zeros((4, 3)), rng.normal(size=(3, 4)))
    np.testing.assert_array_equal(cross_attend(q, proj, w), q)
    one = rng.normal(size=(1, 1, 4))
    w2 = CrossAttentionWeights(rng.normal(size=(4, 2)), rng.normal(size=(4, 2)), rng.normal(size=(4, 3)), rng.normal(size=(3, 4)))
    out, attn = cross_attend(q, one, w2, return_attention=True)
    assert np.all(attn == 1.0)
    np.testing.assert_allclose(out, q + (one.reshape(1, 4) @ w2.w_v) @ w2.w_o, atol=1e-12)


def test_cross_attend_hand_softmax():
    # d_k = 1 so scale = 1; scores = q.w_q * k.w_k = (ln 2, 0)
    w = CrossAttentionWeights([[1.0], [0.0]], [[1.0], [0.0]], np.eye(2), np.eye(2))
    q = np.array([[1.0, 0.0]])
    proj = np.array([[[math.log(2), 0.0], [0.0, 1.0]]])
    _, attn = cross_attend(q, proj, w, return_attention=True)
    np.testing.assert_allclose(attn, [[2 / 3, 1 / 3]], atol=1e-12)
    assert w.scale == 1.0


def test_cross_attention_rows_sum_to_one():
    for seed in range(100):
        r = np.random.default_rng(seed)
        w = CrossAttentionWeights(*(r.normal(size=s) for s in ((4, 3), (4, 3), (4, 2), (2, 4))))
        _, attn = cross_attend(r.normal(size=(3, 4)), r.normal(size=(3, 3, 4)), w, return_attention=True)
        np.testing.assert_allclose(attn.sum(axis=1), 1.0, atol=1e-9)
        assert w.scale == pytest.approx(1 / math.sqrt(3), abs=1e-12)
