"""Spatial Adapter projection, Mask Pooling and query cross-attention."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, ShapeMismatch
from .tensor import as_tensor, l2_normalize, sigmoid, tempered_softmax

EPS_MASK = 1e-6


@dataclass(frozen=True, eq=False)
class SpatialFeatureMap:
    features: np.ndarray
    positional: np.ndarray | None = None

    def __post_init__(self):
        feats = as_tensor(self.features, rank=3, name="features")
        object.__setattr__(self, "features", feats)
        if self.positional is not None:
            pos = as_tensor(self.positional, rank=3, name="positional")
            if pos.shape[2] != feats.shape[2]:
                raise ShapeMismatch(f"positional width {pos.shape[2]} != feature width {feats.shape[2]}")
            if pos.shape[:2] != feats.shape[:2]:
                pos = resize_bilinear(pos, feats.shape[0], feats.shape[1])
            object.__setattr__(self, "positional", pos)


@dataclass(frozen=True, eq=False)
class AdapterWeights:
    """Per-location replacement for the attention-pooling value and output projections."""

    v_proj: np.ndarray
    v_bias: np.ndarray
    c_proj: np.ndarray
    c_bias: np.ndarray

    def __post_init__(self):
        for name, rank in (("v_proj", 2), ("v_bias", 1), ("c_proj", 2), ("c_bias", 1)):
            object.__setattr__(self, name, as_tensor(getattr(self, name), rank=rank, name=name))
        d_in, d_mid = self.v_proj.shape
        if self.v_bias.shape != (d_mid,) or self.c_proj.shape[0] != d_mid:
            raise ShapeMismatch(f"v_proj {self.v_proj.shape} does not chain into c_proj {self.c_proj.shape}")
        if self.c_bias.shape != (self.c_proj.shape[1],):
            raise ShapeMismatch(f"c_bias {self.c_bias.shape} does not match c_proj {self.c_proj.shape}")

    @classmethod
    def identity(cls, dim: int) -> "AdapterWeights":
        eye = np.eye(dim)
        zero = np.zeros(dim)
        return cls(eye, zero, eye, zero)


@dataclass(frozen=True, eq=False)
class CrossAttentionWeights:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray

    def __post_init__(self):
        for name in ("w_q", "w_k", "w_v", "w_o"):
            object.__setattr__(self, name, as_tensor(getattr(self, name), rank=2, name=name))
        if self.w_q.shape != self.w_k.shape:
            raise ShapeMismatch(f"w_q {self.w_q.shape} and w_k {self.w_k.shape} differ")
        if self.w_v.shape[0] != self.w_q.shape[0] or self.w_o.shape != (self.w_v.shape[1], self.w_q.shape[0]):
            raise ShapeMismatch("w_v / w_o do not chain D -> d_v -> D")

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.w_q.shape[1])


def resize_bilinear(grid: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resize an (h, w, C) grid to (height, width, C), half-pixel centers, edge clamped."""
    h, w, _ = grid.shape

    def coords(n_out, n_in):
        x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        x = np.clip(x, 0, n_in - 1)
        lo = np.floor(x).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, x - lo

    y0, y1, fy = coords(height, h)
    x0, x1, fx = coords(width, w)
    top = grid[y0][:, x0] * (1 - fx)[None, :, None] + grid[y0][:, x1] * fx[None, :, None]
    bot = grid[y1][:, x0] * (1 - fx)[None, :, None] + grid[y1][:, x1] * fx[None, :, None]
    return top * (1 - fy)[:, None, None] + bot * fy[:, None, None]


def spatial_project(fmap: SpatialFeatureMap, w: AdapterWeights) -> np.ndarray:
    """Apply the two projections at every location independently (a 1x1 convolution).

    Returns an (H, W, D) map in language space.
    """
    x = fmap.features
    if x.shape[2] != w.v_proj.shape[0]:
        raise ShapeMismatch(f"feature width {x.shape[2]} != v_proj input {w.v_proj.shape[0]}")
    if fmap.positional is not None:
        x = x + fmap.positional
    mid = x @ w.v_proj + w.v_bias
    return mid @ w.c_proj + w.c_bias


def mask_pool(projected, masks, normalize: bool = True) -> np.ndarray:
    """Weighted average of ``projected`` (H, W, D) under each of K masks (K, H, W).

    Masks are soft weights in [0, 1]; pass binarized masks for the strict reading.
    One matrix product covers all proposals.
    """
    feats = as_tensor(projected, rank=3, name="projected")
    m = as_tensor(masks, rank=3, name="masks")
    if m.shape[1:] != feats.shape[:2]:
        raise ShapeMismatch(f"mask spatial size {m.shape[1:]} != feature map {feats.shape[:2]}")
    if m.min() < 0 or m.max() > 1:
        raise ValueError("mask weights must lie in [0, 1]")
    k = m.shape[0]
    flat_m = m.reshape(k, -1)
    mass = flat_m.sum(axis=1)
    empty = np.flatnonzero(mass < EPS_MASK)
    if empty.size:
        raise EmptyMask(f"mask {int(empty[0])} has total weight < {EPS_MASK}")
    pooled = (flat_m @ feats.reshape(-1, feats.shape[2])) / mass[:, None]
    return l2_normalize(pooled) if normalize else pooled


def binarize_masks(mask_logits, threshold: float = 0.5) -> np.ndarray:
    logits = as_tensor(mask_logits, rank=3, name="mask_logits")
    return (sigmoid(logits) >= threshold).astype(np.float64)


def cross_attend(queries, projected, w: CrossAttentionWeights, return_attention: bool = False):
    """Single-head cross-attention from K queries to the H*W projected locations, plus residual.

    With ``return_attention`` the (K, H*W) attention matrix is returned as well.
    """
    q = as_tensor(queries, rank=2, name="queries")
    feats = as_tensor(projected, rank=3, name="projected")
    seq = feats.reshape(-1, feats.shape[2])
    if q.shape[1] != seq.shape[1] or q.shape[1] != w.w_q.shape[0]:
        raise ShapeMismatch(f"query width {q.shape[1]}, feature width {seq.shape[1]}, w_q rows {w.w_q.shape[0]}")
    scores = w.scale * (q @ w.w_q) @ (seq @ w.w_k).T
    attn = tempered_softmax(scores, 1.0)
    out = q + (attn @ (seq @ w.w_v)) @ w.w_o
    return (out, attn) if return_attention else out
