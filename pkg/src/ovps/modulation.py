"""Embedding Modulation: similarity-weighted fusion and logit debiasing.

The query embedding of each proposal is in-domain and the pooled CLIP
embedding generalizes better, so the two are mixed with a weight that grows as
the predicting vocabulary drifts from the training vocabulary::

    E_m = normalize(E_q + alpha * (1 - s) * E_c)

Logits are raw cosines against the predicting text embeddings, then divided by
``max(per_category_max, epsilon_sim) ** beta`` so categories far from anything
seen in training are boosted.  Temperature enters only in the softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .concepts import ConceptSet, SimilarityProfile
from .errors import InvalidTemperature, ShapeMismatch
from .tensor import as_tensor, l2_normalize, tempered_softmax


@dataclass(frozen=True)
class ModulationParams:
    alpha: float = 10.0
    beta: float = 0.5
    tau: float = 0.01
    epsilon_sim: float = 1e-3

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidTemperature(f"tau must be positive, got {self.tau}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 <= self.beta <= 1:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.epsilon_sim > 0:
            raise ValueError(f"epsilon_sim must be positive, got {self.epsilon_sim}")


@dataclass(eq=False)
class EmbeddingBundle:
    """Per-image intermediate embeddings and logits; filled in stage by stage."""

    query: np.ndarray
    clip: np.ndarray
    modulated: np.ndarray | None = None
    logits: np.ndarray | None = None
    debiased_logits: np.ndarray | None = None
    probs: np.ndarray | None = None
    labels: np.ndarray | None = None


def fuse_embeddings(query, clip, s: float, alpha: float) -> np.ndarray:
    q = as_tensor(query, rank=2, name="query")
    c = as_tensor(clip, rank=2, name="clip")
    if q.shape != c.shape:
        raise ShapeMismatch(f"query {q.shape} and clip {c.shape} differ")
    weight = alpha * (1.0 - s)
    if weight == 0.0:
        return l2_normalize(q)
    return l2_normalize(q + weight * c)


def compute_logits(modulated, text) -> np.ndarray:
    """Raw cosine logits (K x M). Both inputs are expected unit-norm row-wise."""
    e = as_tensor(modulated, rank=2, name="modulated")
    t = as_tensor(text, rank=2, name="text")
    if e.shape[1] != t.shape[1]:
        raise ShapeMismatch(f"embedding width {e.shape[1]} != text width {t.shape[1]}")
    return np.clip(e @ t.T, -1.0, 1.0)


def debias_logits(logits, per_category_max, beta: float, epsilon_sim: float = 1e-3) -> np.ndarray:
    z = as_tensor(logits, rank=2, name="logits")
    pcm = as_tensor(per_category_max, rank=1, name="per_category_max")
    if pcm.shape[0] != z.shape[1]:
        raise ShapeMismatch(f"{z.shape[1]} logit columns but {pcm.shape[0]} similarities")
    if beta == 0:
        return z.copy()
    return z / np.maximum(pcm, epsilon_sim) ** beta


def classify(debiased, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Tempered softmax per row and argmax labels (ties go to the lowest index)."""
    if not tau > 0:
        raise InvalidTemperature(f"tau must be positive, got {tau}")
    z = as_tensor(debiased, rank=2, name="debiased")
    probs = tempered_softmax(z, tau)
    return probs, np.argmax(z, axis=1)


def modulate(query, clip, predicting: ConceptSet, profile: SimilarityProfile,
             params: ModulationParams = ModulationParams()) -> EmbeddingBundle:
    """Run fusion, logits, debiasing and classification for one image."""
    bundle = EmbeddingBundle(query=as_tensor(query, rank=2), clip=as_tensor(clip, rank=2))
    bundle.modulated = fuse_embeddings(bundle.query, bundle.clip, profile.domain_similarity, params.alpha)
    bundle.logits = compute_logits(bundle.modulated, predicting.embeddings)
    bundle.debiased_logits = debias_logits(bundle.logits, profile.per_category_max,
                                           params.beta, params.epsilon_sim)
    bundle.probs, bundle.labels = classify(bundle.debiased_logits, params.tau)
    return bundle
