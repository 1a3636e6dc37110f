"""Open-vocabulary panoptic segmentation decision pipeline over precomputed embeddings and masks."""

from __future__ import annotations

from .concepts import CategoryTree, ConceptSet, build_similarity_profile, build_tree, load_concept_set
from .errors import OVPSError, ValidationError
from .inference import InferenceParams, PanopticResult, panoptic_merge, semantic_merge
from .metrics import mean_iou, panoptic_quality, similarity_stats
from .modulation import ModulationParams, modulate

__version__ = "0.1.0"

__all__ = [
    "CategoryTree",
    "ConceptSet",
    "InferenceParams",
    "ModulationParams",
    "OVPSError",
    "PanopticResult",
    "ValidationError",
    "build_similarity_profile",
    "build_tree",
    "load_concept_set",
    "mean_iou",
    "modulate",
    "panoptic_merge",
    "panoptic_quality",
    "semantic_merge",
    "similarity_stats",
]
