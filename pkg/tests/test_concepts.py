from __future__ import annotations

import math

import numpy as np
import pytest

from ovps.concepts import build_similarity_profile, build_tree, load_concept_set, validate_tree
from ovps.errors import (
    CountMismatch, CycleDetected, DuplicateName, EmptyConceptSet, MultipleRoots, NonUnitEmbedding,
    ShapeMismatch, ZeroVector,
)

R = 1 / math.sqrt(2)


def cs(rows, names=None, role="predicting"):
    rows = np.asarray(rows, dtype=float)
    names = names or [f"c{i}" for i in range(len(rows))]
    return load_concept_set(names, rows, [True] * len(rows), role=role)


def test_load_concept_set_normalizes():
    c = load_concept_set(["a", "b", "c"], [[3, 4], [1, 0], [0, 2]], [True, False, True])
    assert len(c) == 3 and c.dim == 2
    np.testing.assert_allclose(np.linalg.norm(c.embeddings, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(c.embeddings[0], [0.6, 0.8])


def test_load_concept_set_errors():
    with pytest.raises(DuplicateName):
        load_concept_set(["cat", "cat"], np.eye(2), [True, True])
    with pytest.raises(CountMismatch):
        load_concept_set(["a", "b"], np.eye(3), [True, True])
    with pytest.raises(ZeroVector):
        load_concept_set(["a"], [[0.0, 0.0]], [True])


def test_profile_identical_sets():
    rng = np.random.default_rng(0)
    rows = rng.normal(size=(6, 8))
    p = build_similarity_profile(cs(rows), cs(rows, role="training"))
    assert p.domain_similarity == pytest.approx(1.0, abs=1e-9)


def test_profile_hand_example():
    p = build_similarity_profile(cs([[1, 0], [R, R]]), cs([[1, 0], [0, 1]], role="training"))
    np.testing.assert_allclose(p.per_category_max, [1.0, R], atol=1e-12)
    assert p.domain_similarity == pytest.approx((1 + R) / 2, abs=1e-12)
    assert p.domain_similarity == pytest.approx(0.8536, abs=1e-3)


def test_profile_errors():
    with pytest.raises(ShapeMismatch):
        build_similarity_profile(cs([[1, 0]]), cs([[1, 0, 0]]))
    with pytest.raises((EmptyConceptSet, ShapeMismatch)):
        load_concept_set([], np.zeros((0, 2)), [])


def test_profile_invariants(rng):
    a, b = rng.normal(size=(5, 4)), rng.normal(size=(7, 4))
    p = build_similarity_profile(cs(a), cs(b))
    np.testing.assert_allclose(p.per_category_max, p.H.max(axis=1), atol=1e-12)
    assert p.domain_similarity == pytest.approx(p.per_category_max.mean(), abs=1e-12)
    assert p.per_category_max.min() <= p.domain_similarity <= p.per_category_max.max()
    # permutation invariance
    q = build_similarity_profile(cs(a[::-1]), cs(b[[3, 1, 0, 6, 5, 4, 2]]))
    assert q.domain_similarity == pytest.approx(p.domain_similarity, abs=1e-12)
    # adding a copy of a predicting category to training never decreases s
    r = build_similarity_profile(cs(a), cs(np.vstack([b, a[2]])))
    assert r.domain_similarity >= p.domain_similarity


def _tree(parents, emb=None):
    emb = np.eye(len(parents)) if emb is None else emb
    return build_tree([{"id": i, "name": f"n{i}", "parent": p} for i, p in enumerate(parents)], emb)


def test_validate_tree():
    validate_tree(_tree([None, 0, 1]))
    with pytest.raises(CycleDetected):
        validate_tree(_tree([None, 2, 1]))
    with pytest.raises(MultipleRoots):
        validate_tree(_tree([None, None]))
    with pytest.raises(NonUnitEmbedding):
        validate_tree(_tree([None, 0], np.array([[1.0, 0.0], [0.0, 2.0]])))


def test_tree_children_sorted():
    t = _tree([None, 0, 0, 0])
    assert t.children(0) == [1, 2, 3]
    assert t.root == 0
