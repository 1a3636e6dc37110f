"""From scored proposals to panoptic, semantic and hierarchical outputs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .concepts import CategoryTree
from .errors import EmptyTree, ShapeMismatch
from .tensor import as_tensor, sigmoid

SCORING_MODES = ("cls", "iou", "cls_x_iou")
SEMANTIC_VOID = -1


@dataclass(frozen=True)
class InferenceParams:
    score_threshold: float = 0.3
    mask_bin_threshold: float = 0.5
    min_area: int = 16
    min_overlap_frac: float = 0.8
    merge_stuff: bool = True
    scoring: str = "cls_x_iou"

    def __post_init__(self):
        if self.scoring not in SCORING_MODES:
            raise ValueError(f"scoring must be one of {SCORING_MODES}, got {self.scoring!r}")
        if not 0 <= self.score_threshold <= 1:
            raise ValueError(f"score_threshold must lie in [0, 1], got {self.score_threshold}")
        if not 0 < self.mask_bin_threshold < 1:
            raise ValueError(f"mask_bin_threshold must lie in (0, 1), got {self.mask_bin_threshold}")
        if self.min_area < 0 or not 0 <= self.min_overlap_frac <= 1:
            raise ValueError("min_area must be >= 0 and min_overlap_frac in [0, 1]")


@dataclass(eq=False)
class ScoredProposal:
    index: int
    mask_logits: np.ndarray
    class_probs: np.ndarray
    iou_score: float
    label: int
    score: float
    embedding: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class Segment:
    id: int
    category: int
    is_thing: bool
    score: float
    area: int


@dataclass(eq=False)
class PanopticResult:
    segment_map: np.ndarray
    segments: list[Segment]

    def segment(self, seg_id: int) -> Segment:
        for s in self.segments:
            if s.id == seg_id:
                return s
        raise KeyError(seg_id)

    def to_table(self) -> dict:
        return {"segments": [
            {"id": s.id, "category": s.category, "is_thing": s.is_thing,
             "score": s.score, "area": s.area}
            for s in self.segments
        ]}

    @classmethod
    def from_table(cls, segment_map, table: dict) -> "PanopticResult":
        segs = [Segment(id=int(r["id"]), category=int(r["category"]), is_thing=bool(r["is_thing"]),
                        score=float(r["score"]), area=int(r["area"]))
                for r in table["segments"]]
        return cls(segment_map=np.asarray(segment_map, dtype=np.int32), segments=segs)


def score_proposals(mask_logits, probs, labels, iou_scores, scoring: str = "cls_x_iou",
                    embeddings=None) -> list[ScoredProposal]:
    """Attach a ranking score to every proposal according to ``scoring``."""
    if scoring not in SCORING_MODES:
        raise ValueError(f"scoring must be one of {SCORING_MODES}, got {scoring!r}")
    masks = as_tensor(mask_logits, rank=3, name="mask_logits")
    probs = as_tensor(probs, rank=2, name="probs")
    ious = np.asarray(iou_scores, dtype=np.float64).ravel()
    k = masks.shape[0]
    if probs.shape[0] != k or ious.shape[0] != k or len(labels) != k:
        raise ShapeMismatch(f"{k} masks, {probs.shape[0]} prob rows, {ious.shape[0]} IoU scores")
    out = []
    for i in range(k):
        label = int(labels[i])
        cls_score = float(probs[i, label])
        iou = float(ious[i])
        score = {"cls": cls_score, "iou": iou, "cls_x_iou": cls_score * iou}[scoring]
        out.append(ScoredProposal(
            index=i, mask_logits=masks[i], class_probs=probs[i], iou_score=iou,
            label=label, score=score,
            embedding=None if embeddings is None else np.asarray(embeddings[i]),
        ))
    return out


def filter_proposals(proposals: Sequence[ScoredProposal], score_threshold: float) -> list[ScoredProposal]:
    kept = [p for p in proposals if p.score >= score_threshold]
    # sorted() is stable, so equal scores keep input order
    return sorted(kept, key=lambda p: -p.score)


def panoptic_merge(kept: Sequence[ScoredProposal], is_thing: Sequence[bool],
                   params: InferenceParams = InferenceParams(),
                   shape: tuple[int, int] | None = None) -> PanopticResult:
    """Resolve overlapping proposals into disjoint segments.

    Each pixel goes to the proposal with the largest ``score * sigmoid(logit)``
    among those whose mask probability clears ``mask_bin_threshold``; pixels no
    proposal claims stay void (id 0).  A proposal is dropped when the pixels it
    wins cover less than ``min_overlap_frac`` of its own binarized mask or fewer
    than ``min_area`` pixels.  Stuff proposals of one category share a segment
    when ``merge_stuff`` is set.  ``kept`` is expected in descending score order.
    """
    if not kept:
        if shape is None:
            raise ShapeMismatch("empty proposal list needs an explicit image shape")
        return PanopticResult(segment_map=np.zeros(shape, dtype=np.int32), segments=[])
    h, w = kept[0].mask_logits.shape
    if shape is not None and tuple(shape) != (h, w):
        raise ShapeMismatch(f"proposal masks are {(h, w)}, expected {tuple(shape)}")
    for p in kept:
        if p.mask_logits.shape != (h, w):
            raise ShapeMismatch(f"proposal {p.index} mask is {p.mask_logits.shape}, expected {(h, w)}")

    probs = sigmoid(np.stack([p.mask_logits for p in kept]))
    binary = probs >= params.mask_bin_threshold
    scores = np.array([p.score for p in kept])
    weighted = np.where(binary, scores[:, None, None] * probs, -np.inf)
    owner = np.argmax(weighted, axis=0)
    claimed = binary.any(axis=0)

    seg_map = np.zeros((h, w), dtype=np.int32)
    segments: dict[int, Segment] = {}
    stuff_ids: dict[int, int] = {}
    next_id = 1
    for k, p in enumerate(kept):
        original = int(np.count_nonzero(binary[k]))
        won = claimed & (owner == k)
        area = int(np.count_nonzero(won))
        if original == 0 or area == 0:
            continue
        if area / original < params.min_overlap_frac or area < params.min_area:
            continue
        thing = bool(is_thing[p.label])
        if not thing and params.merge_stuff and p.label in stuff_ids:
            sid = stuff_ids[p.label]
            prev = segments[sid]
            segments[sid] = Segment(sid, prev.category, prev.is_thing, prev.score, prev.area + area)
        else:
            sid = next_id
            next_id += 1
            segments[sid] = Segment(sid, p.label, thing, p.score, area)
            if not thing:
                stuff_ids[p.label] = sid
        seg_map[won] = sid
    return PanopticResult(segment_map=seg_map, segments=[segments[i] for i in sorted(segments)])


def semantic_merge(pan: PanopticResult) -> np.ndarray:
    """Recolor a segment map by category index; void becomes -1."""
    lut = {0: SEMANTIC_VOID}
    lut.update({s.id: s.category for s in pan.segments})
    ids = np.asarray(pan.segment_map)
    out = np.full(ids.shape, SEMANTIC_VOID, dtype=np.int32)
    for seg_id, cat in lut.items():
        out[ids == seg_id] = cat
    return out


def hierarchical_classify(embedding, tree: CategoryTree) -> list[str]:
    """Greedy root-to-leaf descent choosing the most similar child at each level.

    Ties go to the lower node id.  A synthetic root is not part of the path.
    """
    if not tree.nodes:
        raise EmptyTree("tree has no nodes")
    e = np.asarray(embedding, dtype=np.float64).ravel()
    node = tree.root
    path = [] if tree.nodes[node].synthetic else [tree.nodes[node].name]
    while True:
        children = tree.children(node)
        if not children:
            return path
        sims = [float(tree.nodes[c].embedding @ e) for c in children]
        node = children[int(np.argmax(sims))]
        path.append(tree.nodes[node].name)
