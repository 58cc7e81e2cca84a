import math

import numpy as np

from bias.metrics import BiasScoreTable, Coverage, Direction
from exceptions import ConfigError, MetricFaultError, UndefinedMetricError
from kg.slicer import DemographySlice
from models.models import EmbeddingTable, gradients, scores
from utils import get_logger

logger = get_logger(__name__)

MIN_COVERAGE = 0.5


def _step_sign(direction: Direction) -> float:
    if direction is Direction.SIGNED:
        raise ConfigError("embedding bias needs a male or female direction")
    return direction.sign


def perturb_vectors(
    table: EmbeddingTable,
    vectors: np.ndarray,
    gender_rel: int,
    male: int,
    female: int,
    alpha: float,
    direction: Direction,
    steps: int = 1,
) -> np.ndarray:
    """Gradient steps of each row towards the male (or female) pole.

    The objective is g(e, r_g, e_male) - g(e, r_g, e_female), negated for the
    female direction. Works on an (N, d) array; the table is not modified.
    """
    if alpha < 0:
        raise ConfigError(f"alpha must be non-negative, got {alpha}")
    sign = _step_sign(direction)
    r_g = table.relations[gender_rel]
    e_a, e_b = table.entities[male], table.entities[female]
    out = np.array(vectors, dtype=np.float64, copy=True)
    for _ in range(steps):
        towards_a, _, _ = gradients(table.kind, out, r_g, e_a)
        towards_b, _, _ = gradients(table.kind, out, r_g, e_b)
        delta = sign * alpha * (towards_a - towards_b)
        if not np.isfinite(delta).all():
            raise MetricFaultError("non-finite gradient while perturbing towards a gender pole")
        out = out + delta
    return out


def perturb_person(
    table: EmbeddingTable,
    person: int,
    gender_rel: int,
    male: int,
    female: int,
    alpha: float,
    direction: Direction,
    steps: int = 1,
) -> np.ndarray:
    """e'_j = e_j + alpha * d m / d e_j (sign-flipped objective for the female direction)."""
    return perturb_vectors(
        table, table.entities[person][None, :], gender_rel, male, female, alpha, direction, steps
    )[0]


def _lookup(table: EmbeddingTable, external_id: str, what: str, relation: bool = False) -> int:
    handle = table.relation_handle(external_id) if relation else table.entity_handle(external_id)
    if handle is None:
        raise MetricFaultError(f"{what} '{external_id}' has no embedding")
    return handle


def embedding_bias_scores(
    table: EmbeddingTable,
    demography: DemographySlice,
    direction: Direction,
    alpha: float = 0.1,
    steps: int = 1,
) -> BiasScoreTable:
    """b_p = mean over slice humans of g(e'_j, r_p, e_p) - g(e_j, r_p, e_p)

    Args:
        table (EmbeddingTable): trained embeddings, looked up by external id
        demography (DemographySlice): humans and eligible occupations
        direction (Direction): male or female pole
        alpha (float, optional): gradient step size. Defaults to 0.1.
        steps (int, optional): gradient steps per person. Defaults to 1.

    Returns:
        BiasScoreTable: one score per embedded eligible occupation, with coverage
    """
    graph, spec = demography.graph, demography.spec
    humans = sorted(demography.humans)
    universe = sorted(demography.occupation_universe)
    if not humans or not universe:
        raise UndefinedMetricError(
            f"embedding bias undefined for slice '{demography.name}': "
            f"{len(humans)} humans, {len(universe)} eligible occupations"
        )

    person_rows = [table.entity_handle(graph.entity_id(h)) for h in humans]
    person_rows = np.asarray([row for row in person_rows if row is not None], dtype=np.int64)
    occupations = [(o, table.entity_handle(graph.entity_id(o))) for o in universe]
    occupations = [(o, row) for o, row in occupations if row is not None]
    coverage = Coverage(len(humans), len(person_rows), len(universe), len(occupations))
    if coverage.human_ratio < MIN_COVERAGE or coverage.occupation_ratio < MIN_COVERAGE:
        raise MetricFaultError(
            f"slice '{demography.name}': embedding coverage too low "
            f"({coverage.humans_found}/{coverage.humans_total} humans, "
            f"{coverage.occupations_found}/{coverage.occupations_total} occupations)"
        )
    if coverage.humans_found < coverage.humans_total or coverage.occupations_found < coverage.occupations_total:
        logger.warning(
            "slice '%s': %d humans and %d occupations without embedding are left out",
            demography.name,
            coverage.humans_total - coverage.humans_found,
            coverage.occupations_total - coverage.occupations_found,
        )

    gender_rel = _lookup(table, spec.gender, "gender relation", relation=True)
    occupation_rel = _lookup(table, spec.occupation, "occupation relation", relation=True)
    male = _lookup(table, spec.male, "male gender value")
    female = _lookup(table, spec.female, "female gender value")

    # fancy indexing copies, the stored table stays untouched
    before = table.entities[person_rows]
    after = perturb_vectors(table, before, gender_rel, male, female, alpha, direction, steps)
    r_p = table.relations[occupation_rel]

    result = {}
    for occupation, row in occupations:
        e_p = table.entities[row]
        diff = scores(table.kind, after, r_p, e_p) - scores(table.kind, before, r_p, e_p)
        value = math.fsum(diff.tolist()) / len(person_rows)
        if not math.isfinite(value):
            raise MetricFaultError(f"non-finite bias score for occupation {graph.entity_id(occupation)}")
        result[occupation] = value

    return BiasScoreTable(
        result,
        direction,
        f"embed-bias({table.kind.value})",
        demography.name,
        coverage,
    )
