from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from exceptions import ConfigError, UndefinedMetricError
from kg.slicer import DemographySlice
from utils import get_logger

logger = get_logger(__name__)

DATA_BIAS = "data-bias"
# grid points are produced by linspace, so |theta| == t may be off by an ulp
GRID_TOLERANCE = 1e-12
DEFAULT_GRID_STEPS = 100


class Direction(Enum):
    MALE = "male"
    FEMALE = "female"
    SIGNED = "signed"

    @property
    def sign(self) -> float:
        return -1.0 if self is Direction.FEMALE else 1.0


@dataclass(frozen=True)
class Coverage:
    humans_total: int
    humans_found: int
    occupations_total: int
    occupations_found: int

    @property
    def human_ratio(self) -> float:
        return self.humans_found / self.humans_total if self.humans_total else 0.0

    @property
    def occupation_ratio(self) -> float:
        return self.occupations_found / self.occupations_total if self.occupations_total else 0.0


@dataclass(frozen=True)
class BiasScoreTable:
    scores: dict[int, float]
    direction: Direction
    provenance: str
    demography: str
    coverage: Coverage | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.scores)


@dataclass(frozen=True)
class RankedList:
    """(occupation, score) pairs, scores non-increasing, ties by ascending id."""

    entries: tuple[tuple[int, float], ...]

    @cached_property
    def _ranks(self) -> dict[int, int]:
        return {o: i for i, (o, _) in enumerate(self.entries, start=1)}

    @property
    def occupations(self) -> list[int]:
        return [o for o, _ in self.entries]

    def rank_of(self, occupation: int) -> int | None:
        return self._ranks.get(occupation)

    def top(self, k: int) -> list[int]:
        return [o for o, _ in self.entries[:k]]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True)
class ThresholdCurve:
    grid: tuple[float, ...]
    neutral_counts: tuple[int, ...]
    selected: float
    degenerate: bool = False


def data_bias_scores(demography: DemographySlice) -> BiasScoreTable:
    """theta_o = M_o / M - F_o / F for every eligible occupation (positive leans male)."""
    males, females = demography.male_count, demography.female_count
    if males == 0 or females == 0:
        raise UndefinedMetricError(
            f"data bias undefined for slice '{demography.name}': {males} male, {females} female humans"
        )
    male_counts, female_counts = demography.occupation_counts()
    scores = {
        o: male_counts[o] / males - female_counts[o] / females
        for o in sorted(demography.occupation_universe)
    }
    return BiasScoreTable(scores, Direction.SIGNED, DATA_BIAS, demography.name)


def rank_occupations(table: BiasScoreTable) -> RankedList:
    return RankedList(tuple(sorted(table.scores.items(), key=lambda item: (-item[1], item[0]))))


def ranked_by_data_bias(table: BiasScoreTable, direction: Direction) -> RankedList:
    """Male list: theta descending. Female list: -theta descending."""
    if direction is Direction.SIGNED:
        return rank_occupations(table)
    oriented = BiasScoreTable(
        {o: direction.sign * theta for o, theta in table.scores.items()},
        direction,
        table.provenance,
        table.demography,
    )
    return rank_occupations(oriented)


def threshold_grid(table: BiasScoreTable, steps: int = DEFAULT_GRID_STEPS) -> np.ndarray:
    """0 to max|theta| in `steps` uniform steps (0 to 1 when every theta is 0)."""
    upper = max((abs(v) for v in table.scores.values()), default=0.0) or 1.0
    return np.linspace(0.0, upper, steps + 1)


def neutral_count(scores: Iterable[float], t: float) -> int:
    return sum(1 for v in scores if abs(v) <= t + GRID_TOLERANCE)


def select_threshold(
    table: BiasScoreTable,
    grid: Sequence[float] | None = None,
    steps: int = DEFAULT_GRID_STEPS,
) -> ThresholdCurve:
    """Threshold where the neutral-occupation count starts to rise sharply.

    N(t) counts occupations with -t <= theta <= t. The selected grid point
    maximises N(t+) - 2 N(t) + N(t-) over the interior points, smallest t on
    ties. A flat curve, or two or more occupations sharing one theta, is
    degenerate and selects the first interior point.
    """
    points = np.asarray(grid if grid is not None else threshold_grid(table, steps), dtype=np.float64)
    if points.ndim != 1 or len(points) < 3:
        raise ConfigError("threshold grid needs at least 3 points")
    if points[0] != 0.0 or not (np.diff(points) > 0).all():
        raise ConfigError("threshold grid must be ascending and start at 0")

    values = list(table.scores.values())
    counts = np.array([neutral_count(values, t) for t in points], dtype=np.int64)
    identical = len(values) > 1 and len(set(values)) == 1
    if identical or (counts == counts[0]).all():
        logger.warning(
            "degenerate neutral-count curve for '%s' (%s); using t=%g",
            table.demography,
            table.provenance,
            points[1],
        )
        return ThresholdCurve(tuple(points.tolist()), tuple(counts.tolist()), float(points[1]), True)

    second = counts[2:] - 2 * counts[1:-1] + counts[:-2]
    selected = float(points[1 + int(np.argmax(second))])
    logger.debug("threshold for '%s': %g", table.demography, selected)
    return ThresholdCurve(tuple(points.tolist()), tuple(counts.tolist()), selected)


def classify_occupations(table: BiasScoreTable, t: float) -> tuple[set[int], set[int], set[int]]:
    """(male, female, neutral): theta > t, theta < -t, and the rest."""
    if t < 0:
        raise ConfigError(f"threshold must be non-negative, got {t}")
    male = {o for o, v in table.scores.items() if v > t}
    female = {o for o, v in table.scores.items() if v < -t}
    neutral = set(table.scores) - male - female
    return male, female, neutral
