import itertools
import math
import random

import pytest

from analytics.diversity import frequency_counts, occupation_entropy, unique_occupations
from bias.metrics import Direction, RankedList


def ranked(*occupations: int) -> RankedList:
    n = len(occupations)
    return RankedList(tuple((o, float(n - i)) for i, o in enumerate(occupations)))


def test_shared_occupation_contributes_nothing():
    lists = {f"d{i}": ranked(7) for i in range(13)}
    report = occupation_entropy(lists, k=1)
    assert report.probabilities == {7: 1.0}
    assert report.entropy == 0.0


def test_two_demographies_two_occupations():
    report = occupation_entropy({"a": ranked(1), "b": ranked(2)}, k=1)
    assert report.entropy == pytest.approx(math.log(2))
    assert report.probabilities == {1: 0.5, 2: 0.5}


def test_single_demography():
    report = occupation_entropy({"a": ranked(1, 2, 3)}, k=50)
    assert report.entropy == 0.0
    assert report.demographies == 1


def test_empty_input():
    report = occupation_entropy({}, k=5, direction=Direction.FEMALE, model="complex")
    assert report.entropy == 0.0
    assert report.probabilities == {}
    assert report.to_dict()["vocabulary_size"] == 0
    assert report.to_dict()["direction"] == "female"


def test_entropy_only_sees_the_top_k():
    lists = {"a": ranked(1, 2), "b": ranked(1, 3)}
    assert occupation_entropy(lists, k=1).entropy == 0.0
    assert occupation_entropy(lists, k=2).entropy == pytest.approx(2 * -(0.5 * math.log(0.5)))


def test_frequency_counts():
    lists = {
        "a": ranked(1, 2),
        "b": ranked(1, 3),
        "c": ranked(1, 2),
        "d": ranked(4),
        "e": ranked(5),
    }
    counts = frequency_counts(lists, 2)
    assert counts[1] == 3
    assert list(counts) == [1, 2, 3, 4, 5]
    assert frequency_counts({}, 3) == {}


def test_frequency_counts_match_tally():
    lists = {"a": ranked(4, 1, 9), "b": ranked(1, 4), "c": ranked(9, 8, 7), "d": ranked(2, 4, 1)}
    k = 2
    tally = {}
    for r in lists.values():
        for o in r.top(k):
            tally[o] = tally.get(o, 0) + 1
    assert frequency_counts(lists, k) == tally


def test_unique_occupations():
    lists = {"a": ranked(1, 2), "b": ranked(1, 3), "c": ranked(4, 1)}
    assert unique_occupations(lists, 2) == {"a": [2], "b": [3], "c": [4]}


def test_entropy_matches_direct_formula():
    rng = random.Random(4)
    for _ in range(200):
        lists = {
            f"d{i}": ranked(*rng.sample(range(20), rng.randint(0, 20)))
            for i in range(rng.randint(1, 6))
        }
        k = rng.randint(1, 20)
        occurrences = {}
        for entries in lists.values():
            for occupation in entries.occupations[:k]:
                occurrences[occupation] = occurrences.get(occupation, 0) + 1
        expected = -sum(c / len(lists) * math.log(c / len(lists)) for c in occurrences.values())
        assert occupation_entropy(lists, k=k).entropy == pytest.approx(expected, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("vocabulary, demographies", [(1, 2), (2, 2), (2, 3), (3, 3), (2, 4), (3, 4)])
def test_entropy_peaks_when_every_occupation_has_one_demography(vocabulary, demographies):
    subsets = [
        frozenset(d for d in range(demographies) if mask >> d & 1)
        for mask in range(1, 2**demographies)
    ]
    best = 0.0
    for pattern in itertools.product(subsets, repeat=vocabulary):
        lists = {
            f"d{d}": ranked(*(o for o, holders in enumerate(pattern) if d in holders))
            for d in range(demographies)
        }
        best = max(best, occupation_entropy(lists, k=vocabulary).entropy)

    one_each = {
        f"d{d}": ranked(*(o for o in range(vocabulary) if o % demographies == d))
        for d in range(demographies)
    }
    spread = occupation_entropy(one_each, k=vocabulary).entropy
    assert spread == pytest.approx(vocabulary * math.log(demographies) / demographies, rel=1e-12)
    assert spread >= best - 1e-12
