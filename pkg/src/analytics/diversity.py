import math
from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass, field

from scipy.special import entr

from bias.metrics import Direction, RankedList
from exceptions import ConfigError

DEFAULT_K = 50


@dataclass(frozen=True)
class DiversityReport:
    direction: Direction
    model: str
    k: int
    demographies: int
    # occupation -> fraction of demographies whose top-K holds it
    probabilities: dict[int, float] = field(default_factory=dict)
    entropy: float = 0.0

    def to_dict(self) -> dict:
        return {
            "direction": self.direction.value,
            "model": self.model,
            "k": self.k,
            "demographies": self.demographies,
            "vocabulary_size": len(self.probabilities),
            "entropy": self.entropy,
        }


def frequency_counts(lists: Mapping[str, RankedList], k: int) -> dict[int, int]:
    """Number of demographies whose top-K list contains each occupation."""
    if k < 1:
        raise ConfigError(f"K must be positive, got {k}")
    counts = Counter()
    for ranked in lists.values():
        counts.update(set(ranked.top(k)))
    return dict(sorted(counts.items(), key=lambda item: (-item[1], item[0])))


def occupation_entropy(
    lists: Mapping[str, RankedList],
    k: int = DEFAULT_K,
    direction: Direction = Direction.MALE,
    model: str = "",
) -> DiversityReport:
    """Sum over the top-K vocabulary of -p log p (natural log), p the demography-occurrence fraction."""
    counts = frequency_counts(lists, k)
    if not lists or not counts:
        return DiversityReport(direction, model, k, len(lists))
    total = len(lists)
    probabilities = {o: c / total for o, c in sorted(counts.items())}
    # + 0.0 turns a -0.0 sum into 0.0
    entropy = math.fsum(entr(list(probabilities.values())).tolist()) + 0.0
    return DiversityReport(direction, model, k, total, probabilities, entropy)


def unique_occupations(lists: Mapping[str, RankedList], k: int) -> dict[str, list[int]]:
    """Per demography, its top-K occupations found in no other demography's top-K."""
    counts = frequency_counts(lists, k)
    return {
        name: [o for o in ranked.top(k) if counts[o] == 1]
        for name, ranked in lists.items()
    }
