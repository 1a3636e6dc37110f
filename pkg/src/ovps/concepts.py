"""Concept sets, cross-set similarity structure and category trees."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    CountMismatch,
    CycleDetected,
    DuplicateName,
    EmptyConceptSet,
    EmptyTree,
    MultipleRoots,
    NonUnitEmbedding,
    ShapeMismatch,
)
from .tensor import as_tensor, cosine_similarity_matrix, l2_normalize

UNIT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ConceptSet:
    """Ordered category names with unit-norm text embeddings and thing/stuff flags."""

    names: tuple[str, ...]
    embeddings: np.ndarray
    is_thing: tuple[bool, ...]
    role: str = "predicting"

    def __len__(self) -> int:
        return len(self.names)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True, eq=False)
class SimilarityProfile:
    """Cosine matrix between a predicting set (rows) and a training set (columns).

    ``per_category_max[i]`` is the best training match of predicting category
    ``i``; ``domain_similarity`` is their mean.
    """

    H: np.ndarray
    per_category_max: np.ndarray
    domain_similarity: float


def load_concept_set(names: Sequence[str], embeddings, flags: Sequence[bool],
                     role: str = "predicting") -> ConceptSet:
    """Build a :class:`ConceptSet`, normalizing embeddings and rejecting duplicates."""
    if role not in ("training", "predicting"):
        raise ValueError(f"role must be 'training' or 'predicting', got {role!r}")
    names = tuple(names)
    if len(names) == 0:
        raise EmptyConceptSet("concept set has no categories")
    for n in names:
        if not isinstance(n, str) or not n:
            raise ValueError(f"category names must be non-empty strings, got {n!r}")
    seen: set[str] = set()
    for n in names:
        if n in seen:
            raise DuplicateName(f"duplicate category name {n!r}")
        seen.add(n)
    emb = as_tensor(embeddings, rank=2, name="embeddings")
    flags = tuple(bool(f) for f in flags)
    if not (len(names) == emb.shape[0] == len(flags)):
        raise CountMismatch(
            f"{len(names)} names, {emb.shape[0]} embedding rows, {len(flags)} flags"
        )
    emb = l2_normalize(emb)
    emb.setflags(write=False)
    return ConceptSet(names=names, embeddings=emb, is_thing=flags, role=role)


def build_similarity_profile(predicting: ConceptSet, training: ConceptSet) -> SimilarityProfile:
    if len(predicting) == 0 or len(training) == 0:
        raise EmptyConceptSet("both concept sets need at least one category")
    if predicting.dim != training.dim:
        raise ShapeMismatch(f"embedding widths differ: {predicting.dim} vs {training.dim}")
    H = cosine_similarity_matrix(predicting.embeddings, training.embeddings)
    per_max = H.max(axis=1)
    s = float(np.mean(per_max))
    for arr in (H, per_max):
        arr.setflags(write=False)
    return SimilarityProfile(H=H, per_category_max=per_max, domain_similarity=s)


@dataclass(frozen=True)
class TreeNode:
    id: int
    name: str
    parent: int | None
    embedding: np.ndarray = field(repr=False, compare=False)
    synthetic: bool = False


@dataclass(frozen=True, eq=False)
class CategoryTree:
    """Rooted category taxonomy.

    A root flagged ``synthetic`` is a pure container (e.g. above ``thing`` and
    ``stuff``) and is left out of predicted paths.
    """

    nodes: dict[int, TreeNode]

    def children(self, node_id: int) -> list[int]:
        return sorted(n.id for n in self.nodes.values() if n.parent == node_id)

    @property
    def root(self) -> int:
        roots = [n.id for n in self.nodes.values() if n.parent is None]
        if len(roots) != 1:
            raise MultipleRoots(f"expected exactly one root, found {sorted(roots)}")
        return roots[0]


def build_tree(records: Sequence[dict], embeddings) -> CategoryTree:
    """Assemble a tree from ``{"id", "name", "parent"[, "synthetic"]}`` records.

    ``embeddings`` row ``i`` belongs to ``records[i]``.  Rows are taken as-is so
    that :func:`validate_tree` can report non-unit inputs.
    """
    emb = as_tensor(embeddings, rank=2, name="tree embeddings")
    if emb.shape[0] != len(records):
        raise CountMismatch(f"{len(records)} nodes but {emb.shape[0]} embedding rows")
    nodes: dict[int, TreeNode] = {}
    for rec, row in zip(records, emb):
        nid = int(rec["id"])
        if nid in nodes:
            raise DuplicateName(f"duplicate node id {nid}")
        parent = rec.get("parent")
        nodes[nid] = TreeNode(
            id=nid,
            name=str(rec["name"]),
            parent=None if parent is None else int(parent),
            embedding=row.copy(),
            synthetic=bool(rec.get("synthetic", False)),
        )
    return CategoryTree(nodes=nodes)


def validate_tree(tree: CategoryTree) -> None:
    """Raise on the first structural violation; return ``None`` when the tree is valid."""
    if not tree.nodes:
        raise EmptyTree("tree has no nodes")
    roots = sorted(n.id for n in tree.nodes.values() if n.parent is None)
    for node in tree.nodes.values():
        if node.parent is not None and node.parent not in tree.nodes:
            raise ValueError(f"node {node.id} references unknown parent {node.parent}")
    # walk parents from every node; a revisit before reaching a root is a cycle
    for start in sorted(tree.nodes):
        seen = {start}
        cur = tree.nodes[start].parent
        while cur is not None:
            if cur in seen:
                raise CycleDetected(f"cycle through node {cur}")
            seen.add(cur)
            cur = tree.nodes[cur].parent
    if len(roots) != 1:
        raise MultipleRoots(f"expected exactly one root, found {roots}")
    for nid in sorted(tree.nodes):
        norm = float(np.linalg.norm(tree.nodes[nid].embedding))
        if abs(norm - 1.0) > UNIT_TOL:
            raise NonUnitEmbedding(f"node {nid} embedding has norm {norm}")
