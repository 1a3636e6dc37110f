"""Deterministic synthetic scenes.

Random numbers come from xoshiro256** seeded through splitmix64, both
implemented here on 64-bit integers so any language can reproduce a scene
bit for bit:

* ``splitmix64``: ``x += 0x9E3779B97F4A7C15; z = x; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
  z = (z ^ z>>27) * 0x94D049BB133111EB; return z ^ z>>31`` (all mod 2**64).
  The four xoshiro state words are four successive outputs starting from ``seed``.
* ``xoshiro256**``: ``r = rotl(s1 * 5, 7) * 9; t = s1 << 17; s2 ^= s0; s3 ^= s1;
  s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45); return r``.
* ``uniform() = (next() >> 11) * 2**-53`` in [0, 1).
* ``integer(lo, hi) = lo + next() % (hi - lo + 1)`` (inclusive bounds).
* ``normal()``: Box-Muller on ``u1 = 1 - uniform()``, ``u2 = uniform()``; the
  cosine branch is returned first, the sine branch is cached for the next call.

Scene construction order (each step consumes the stream in this order):

1. ``M`` category prototypes, ``D`` normals each, unit-normalized; then ``M``
   thing flags (``uniform() < 0.5``).
2. Extra training prototypes when ``N > M`` (same recipe; flags follow).
3. ``K`` ground-truth rectangles by guillotine splitting: the largest rectangle
   (lowest index on ties) is cut across its longer side (rows when
   ``h >= w``) at ``4 + integer(0, length - 8)``; the first half keeps the
   index, the second is appended.  Every side stays >= 4 pixels.
4. Labels: a partial Fisher-Yates shuffle of ``range(M)`` when ``K <= M``
   (step ``i`` swaps ``i`` with ``integer(i, M - 1)``), otherwise
   ``integer(0, M - 1)`` per rectangle.
5. Feature map, row-major over (h, w, d): ``prototype + noise * normal() / sqrt(D)``.
6. Query embeddings, row-major over (k, d), same recipe (optionally pulled
   toward the nearest training prototype by ``query_seen_bias``).
7. Jittered proposals: for each rectangle, its top, left, bottom, right edges
   move by ``integer(-jitter, jitter)`` in that order (no draws when jitter is 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .concepts import ConceptSet, load_concept_set
from .errors import InvalidSpec
from .inference import PanopticResult, Segment
from .metrics import mask_iou

MASK_LOGIT = 20.0
MIN_SIDE = 4
_MASK64 = (1 << 64) - 1


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


def splitmix64(state: int) -> tuple[int, int]:
    """Return ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class Xoshiro256:
    def __init__(self, seed: int):
        sm = seed & _MASK64
        words = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            words.append(out)
        self.s = words
        self._spare: float | None = None

    def next(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        return (self.next() >> 11) * (1.0 / (1 << 53))

    def integer(self, lo: int, hi: int) -> int:
        return lo + self.next() % (hi - lo + 1)

    def normal(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normals(self, *shape: int) -> np.ndarray:
        n = math.prod(shape)
        return np.array([self.normal() for _ in range(n)], dtype=np.float64).reshape(shape)


@dataclass(frozen=True)
class FixtureSpec:
    seed: int = 0
    height: int = 32
    width: int = 32
    num_proposals: int = 6
    dim: int = 16
    num_predicting: int = 8
    num_training: int = 8
    noise: float = 0.0
    jitter: int = 0
    query_seen_bias: float = 0.0

    def __post_init__(self):
        for name in ("height", "width", "num_proposals", "dim", "num_predicting", "num_training"):
            if getattr(self, name) < 1:
                raise InvalidSpec(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 <= self.noise <= 1:
            raise InvalidSpec(f"noise must lie in [0, 1], got {self.noise}")
        if self.jitter < 0:
            raise InvalidSpec(f"jitter must be >= 0, got {self.jitter}")
        if not 0 <= self.query_seen_bias <= 1:
            raise InvalidSpec(f"query_seen_bias must lie in [0, 1], got {self.query_seen_bias}")


@dataclass(eq=False)
class Scene:
    image_id: str
    features: np.ndarray
    mask_logits: np.ndarray
    queries: np.ndarray
    iou_scores: np.ndarray
    gt_masks: np.ndarray
    gt_labels: np.ndarray
    gt_panoptic: PanopticResult
    predicting: ConceptSet
    training: ConceptSet

    @property
    def shape(self) -> tuple[int, int]:
        return self.features.shape[:2]


def _unit_rows(rng: Xoshiro256, n: int, d: int) -> np.ndarray:
    rows = rng.normals(n, d)
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def _flags(rng: Xoshiro256, n: int) -> list[bool]:
    return [rng.uniform() < 0.5 for _ in range(n)]


def _names(prefix: str, n: int, start: int = 0) -> list[str]:
    return [f"{prefix}_{i:03d}" for i in range(start, start + n)]


def _split_rectangles(rng: Xoshiro256, height: int, width: int, k: int) -> list[tuple[int, int, int, int]]:
    """Tile the image with ``k`` rectangles ``(top, left, bottom, right)`` (exclusive ends)."""
    rects = [(0, 0, height, width)]
    while len(rects) < k:
        areas = [(b - t) * (r - l) for t, l, b, r in rects]
        i = int(np.argmax(areas))
        t, l, b, r = rects[i]
        if b - t >= r - l:
            length = b - t
            if length < 2 * MIN_SIDE:
                raise InvalidSpec(f"cannot split image {height}x{width} into {k} rectangles")
            cut = t + MIN_SIDE + rng.integer(0, length - 2 * MIN_SIDE)
            rects[i], new = (t, l, cut, r), (cut, l, b, r)
        else:
            length = r - l
            if length < 2 * MIN_SIDE:
                raise InvalidSpec(f"cannot split image {height}x{width} into {k} rectangles")
            cut = l + MIN_SIDE + rng.integer(0, length - 2 * MIN_SIDE)
            rects[i], new = (t, l, b, cut), (t, cut, b, r)
        rects.append(new)
    return rects


def _rect_mask(rect, height, width) -> np.ndarray:
    t, l, b, r = rect
    m = np.zeros((height, width))
    m[t:b, l:r] = 1.0
    return m


def _concepts_for(spec: FixtureSpec, rng: Xoshiro256) -> tuple[ConceptSet, ConceptSet]:
    m, n, d = spec.num_predicting, spec.num_training, spec.dim
    protos = _unit_rows(rng, m, d)
    flags = _flags(rng, m)
    names = _names("category", m)
    predicting = load_concept_set(names, protos, flags, role="predicting")
    if n == m:
        training = load_concept_set(names, protos, flags, role="training")
    elif n < m:
        training = load_concept_set(names[:n], protos[:n], flags[:n], role="training")
    else:
        extra = _unit_rows(rng, n - m, d)
        training = load_concept_set(names + _names("category", n - m, m),
                                    np.vstack([protos, extra]), flags + _flags(rng, n - m),
                                    role="training")
    return training, predicting


def build_gt_panoptic(rects, labels, predicting: ConceptSet, height: int, width: int) -> PanopticResult:
    """Ground-truth segments; stuff rectangles of one category share a segment."""
    seg_map = np.zeros((height, width), dtype=np.int32)
    segments: dict[int, Segment] = {}
    stuff_ids: dict[int, int] = {}
    for rect, label in zip(rects, labels):
        label = int(label)
        thing = predicting.is_thing[label]
        t, l, b, r = rect
        area = (b - t) * (r - l)
        if not thing and label in stuff_ids:
            sid = stuff_ids[label]
            prev = segments[sid]
            segments[sid] = Segment(sid, label, False, 1.0, prev.area + area)
        else:
            sid = len(segments) + 1
            segments[sid] = Segment(sid, label, thing, 1.0, area)
            if not thing:
                stuff_ids[label] = sid
        seg_map[t:b, l:r] = sid
    return PanopticResult(segment_map=seg_map, segments=[segments[i] for i in sorted(segments)])


def generate_scene(spec: FixtureSpec, concepts: tuple[ConceptSet, ConceptSet] | None = None,
                   image_id: str | None = None) -> Scene:
    """Build one synthetic scene.

    ``concepts`` is an optional ``(training, predicting)`` pair, e.g. from
    :func:`generate_unseen_split`; by default the sets are drawn from the spec.
    """
    rng = Xoshiro256(spec.seed)
    h, w, k, d = spec.height, spec.width, spec.num_proposals, spec.dim
    if concepts is None:
        training, predicting = _concepts_for(spec, rng)
    else:
        training, predicting = concepts
        if predicting.dim != d or training.dim != d:
            raise InvalidSpec(f"concept sets have width {predicting.dim}, spec says {d}")
    m = len(predicting)
    protos = predicting.embeddings

    rects = _split_rectangles(rng, h, w, k)
    if k <= m:
        order = list(range(m))
        for i in range(k):
            j = rng.integer(i, m - 1)
            order[i], order[j] = order[j], order[i]
        labels = np.array(order[:k], dtype=np.int64)
    else:
        labels = np.array([rng.integer(0, m - 1) for _ in range(k)], dtype=np.int64)

    gt_masks = np.stack([_rect_mask(r, h, w) for r in rects])
    owner = np.argmax(gt_masks, axis=0)
    pixel_protos = protos[labels[owner]]
    features = pixel_protos + spec.noise * rng.normals(h, w, d) / math.sqrt(d)

    targets = protos[labels]
    if spec.query_seen_bias > 0:
        # queries of a trained model lean toward the closest seen category
        seen = training.embeddings
        nearest = seen[np.argmax(targets @ seen.T, axis=1)]
        targets = (1 - spec.query_seen_bias) * targets + spec.query_seen_bias * nearest
    queries = targets + spec.noise * rng.normals(k, d) / math.sqrt(d)

    proposal_masks = []
    for rect in rects:
        if spec.jitter:
            t, l, b, r = (edge + rng.integer(-spec.jitter, spec.jitter) for edge in rect)
            t, l = max(0, t), max(0, l)
            b, r = min(h, b), min(w, r)
            if b <= t or r <= l:
                t, l, b, r = rect
            rect = (t, l, b, r)
        proposal_masks.append(_rect_mask(rect, h, w))
    proposal_masks = np.stack(proposal_masks)
    mask_logits = np.where(proposal_masks > 0, MASK_LOGIT, -MASK_LOGIT)
    ious = np.array([mask_iou(p, g) for p, g in zip(proposal_masks, gt_masks)])

    return Scene(
        image_id=image_id or f"scene_{spec.seed:06d}",
        features=features,
        mask_logits=mask_logits,
        queries=queries,
        iou_scores=ious,
        gt_masks=gt_masks,
        gt_labels=labels,
        gt_panoptic=build_gt_panoptic(rects, labels, predicting, h, w),
        predicting=predicting,
        training=training,
    )


def generate_unseen_split(spec: FixtureSpec, holdout_fraction: float) -> tuple[ConceptSet, ConceptSet]:
    """Training set of ``N`` categories and a predicting set of ``M`` whose last
    ``round(holdout_fraction * M)`` entries are novel.

    Returns ``(training, predicting)``.
    """
    if not 0 < holdout_fraction < 1:
        raise InvalidSpec(f"holdout_fraction must lie in (0, 1), got {holdout_fraction}")
    m, n, d = spec.num_predicting, spec.num_training, spec.dim
    n_novel = max(1, int(round(holdout_fraction * m)))
    shared = m - n_novel
    if shared > n:
        raise InvalidSpec(f"{shared} shared categories do not fit a training set of {n}")
    rng = Xoshiro256(spec.seed)
    train_protos = _unit_rows(rng, n, d)
    train_flags = _flags(rng, n)
    novel = []
    while len(novel) < n_novel:
        row = _unit_rows(rng, 1, d)[0]
        # a novel category must not coincide with a seen one
        if np.max(train_protos @ row) < 1.0 - 1e-9:
            novel.append(row)
    novel_flags = _flags(rng, n_novel)
    train_names = _names("category", n)
    training = load_concept_set(train_names, train_protos, train_flags, role="training")
    predicting = load_concept_set(
        train_names[:shared] + _names("novel", n_novel),
        np.vstack([train_protos[:shared]] + novel),
        train_flags[:shared] + novel_flags,
        role="predicting",
    )
    return training, predicting
