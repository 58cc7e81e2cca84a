from enum import Enum

import numpy as np

from exceptions import SamplingError
from kg.store import KnowledgeGraph, Triple

MAX_TRIES = 100


class CorruptionPolicy(Enum):
    HEAD = "head"
    TAIL = "tail"
    BOTH = "both-uniform"


def corrupt_batch(
    triples: np.ndarray,
    n: int,
    policy: CorruptionPolicy,
    num_entities: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Corrupt every row of a (B, 3) triple array n times.

    Returns a (B, n, 3) array. A replacement equal to the entity it replaces
    would reproduce the positive; such draws are redrawn up to MAX_TRIES times
    and then kept.
    """
    if num_entities < 2:
        raise SamplingError("negative sampling needs at least two entities")
    if n < 1:
        raise SamplingError(f"need at least one negative per positive, got {n}")
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    size = (triples.shape[0], n)

    if policy is CorruptionPolicy.HEAD:
        on_tail = np.zeros(size, dtype=bool)
    elif policy is CorruptionPolicy.TAIL:
        on_tail = np.ones(size, dtype=bool)
    else:
        on_tail = rng.random(size) < 0.5

    original = np.where(on_tail, triples[:, None, 2], triples[:, None, 0])
    replacement = rng.integers(0, num_entities, size=size)
    clash = replacement == original
    tries = 1
    while clash.any() and tries < MAX_TRIES:
        replacement[clash] = rng.integers(0, num_entities, size=int(clash.sum()))
        clash = replacement == original
        tries += 1

    negatives = np.repeat(triples[:, None, :], n, axis=1)
    negatives[..., 0] = np.where(on_tail, negatives[..., 0], replacement)
    negatives[..., 2] = np.where(on_tail, replacement, negatives[..., 2])
    return negatives


def sample_negatives(
    triple: Triple,
    n: int,
    policy: CorruptionPolicy,
    graph: KnowledgeGraph,
    rng: np.random.Generator,
) -> list[Triple]:
    """n corrupted copies of one triple, entities drawn uniformly from the graph."""
    negatives = corrupt_batch(np.asarray([triple]), n, policy, graph.num_entities, rng)
    return [Triple(*map(int, row)) for row in negatives[0]]
