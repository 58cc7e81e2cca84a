import numpy as np
import pytest

from exceptions import SamplingError
from kg.store import KnowledgeGraph, Triple
from training.sampling import CorruptionPolicy, corrupt_batch, sample_negatives


def chain(n: int) -> KnowledgeGraph:
    return KnowledgeGraph.from_external([(f"E{i}", "R", f"E{i + 1}") for i in range(n - 1)])


def test_tail_corruption_keeps_head_and_relation():
    graph = chain(10)
    negatives = sample_negatives(Triple(2, 0, 3), 3, CorruptionPolicy.TAIL, graph, np.random.default_rng(0))
    assert len(negatives) == 3
    assert all(n.head == 2 and n.rel == 0 for n in negatives)
    assert all(n.tail != 3 for n in negatives)


def test_head_corruption_keeps_relation_and_tail():
    graph = chain(10)
    negatives = sample_negatives(Triple(2, 0, 3), 5, CorruptionPolicy.HEAD, graph, np.random.default_rng(0))
    assert all(n.rel == 0 and n.tail == 3 and n.head != 2 for n in negatives)


def test_two_entities_force_the_other_tail():
    graph = chain(2)
    negatives = sample_negatives(Triple(0, 0, 1), 4, CorruptionPolicy.TAIL, graph, np.random.default_rng(1))
    assert negatives == [Triple(0, 0, 0)] * 4


def test_same_seed_same_negatives():
    graph = chain(50)
    triple = Triple(4, 0, 5)
    a = sample_negatives(triple, 20, CorruptionPolicy.BOTH, graph, np.random.default_rng(9))
    b = sample_negatives(triple, 20, CorruptionPolicy.BOTH, graph, np.random.default_rng(9))
    assert a == b


def test_both_policy_corrupts_exactly_one_side():
    triples = np.array([[0, 0, 1], [2, 0, 3]])
    negatives = corrupt_batch(triples, 200, CorruptionPolicy.BOTH, 30, np.random.default_rng(2))
    assert negatives.shape == (2, 200, 3)
    head_changed = negatives[..., 0] != triples[:, None, 0]
    tail_changed = negatives[..., 2] != triples[:, None, 2]
    assert not (head_changed & tail_changed).any()
    assert (head_changed | tail_changed).all()
    assert head_changed.any() and tail_changed.any()
    np.testing.assert_array_equal(negatives[..., 1], 0)


def test_single_entity_graph_cannot_be_sampled():
    graph = KnowledgeGraph.from_external([("E0", "R", "E0")])
    with pytest.raises(SamplingError):
        sample_negatives(Triple(0, 0, 0), 1, CorruptionPolicy.TAIL, graph, np.random.default_rng(0))


def test_needs_a_positive_count():
    with pytest.raises(SamplingError):
        corrupt_batch(np.array([[0, 0, 1]]), 0, CorruptionPolicy.TAIL, 5, np.random.default_rng(0))
