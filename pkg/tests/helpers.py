"""Small builders shared by several test modules."""

from __future__ import annotations

import numpy as np

from ovps.inference import PanopticResult, ScoredProposal, Segment


def proposal(index, mask, score=0.9, label=0, logit=20.0):
    """A confident proposal whose logits are +logit inside ``mask`` and -logit outside."""
    mask = np.asarray(mask, dtype=bool)
    probs = np.zeros(max(label + 1, 2))
    probs[label] = 1.0
    return ScoredProposal(index=index, mask_logits=np.where(mask, logit, -logit), class_probs=probs,
                          iou_score=score, label=label, score=score)


def panoptic(seg_map, categories, thing=True):
    """PanopticResult from an id map and a {segment id: category} dict."""
    seg_map = np.asarray(seg_map, dtype=np.int32)
    segs = [Segment(i, c, thing, 1.0, int(np.count_nonzero(seg_map == i))) for i, c in sorted(categories.items())]
    return PanopticResult(seg_map, segs)
