from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum

import pandas as pd

from exceptions import ConfigError
from kg.store import KnowledgeGraph
from utils import get_logger

logger = get_logger(__name__)

INSTANCE_OF = "P31"
HUMAN = "Q5"
CITIZENSHIP = "P27"
GENDER = "P21"
OCCUPATION = "P106"
MALE = "Q6581097"
FEMALE = "Q6581072"


class Gender(Enum):
    MALE = "male"
    FEMALE = "female"
    OTHER = "other"


@dataclass(frozen=True)
class SliceSpec:
    """Which humans form a demography, expressed with external ids.

    The special ids default to the Wikidata ones and can be replaced for
    synthetic corpora.
    """

    name: str
    countries: tuple[str, ...]
    instance_of: str = INSTANCE_OF
    human: str = HUMAN
    citizenship: str = CITIZENSHIP
    gender: str = GENDER
    occupation: str = OCCUPATION
    male: str = MALE
    female: str = FEMALE

    def __post_init__(self):
        if not self.countries:
            raise ConfigError(f"slice '{self.name}' has no countries")
        if self.gender == self.occupation:
            raise ConfigError(f"slice '{self.name}': gender and occupation relations coincide")
        if self.male == self.female:
            raise ConfigError(f"slice '{self.name}': male and female ids coincide")

    def with_countries(self, countries: Sequence[str]) -> "SliceSpec":
        return SliceSpec(
            self.name,
            tuple(countries),
            self.instance_of,
            self.human,
            self.citizenship,
            self.gender,
            self.occupation,
            self.male,
            self.female,
        )


@dataclass(frozen=True)
class ResolvedSpec:
    """SliceSpec ids mapped to the handles of one graph; None when absent there."""

    countries: frozenset[int]
    instance_of: int | None
    human: int | None
    citizenship: int | None
    gender: int | None
    occupation: int | None
    male: int | None
    female: int | None

    @classmethod
    def resolve(cls, graph: KnowledgeGraph, spec: SliceSpec) -> "ResolvedSpec":
        countries = {graph.entity(c) for c in spec.countries}
        missing = [c for c in spec.countries if graph.entity(c) is None]
        if missing:
            logger.warning("slice '%s': countries not in graph: %s", spec.name, ", ".join(missing))
        countries.discard(None)
        return cls(
            countries=frozenset(countries),
            instance_of=graph.relation(spec.instance_of),
            human=graph.entity(spec.human),
            citizenship=graph.relation(spec.citizenship),
            gender=graph.relation(spec.gender),
            occupation=graph.relation(spec.occupation),
            male=graph.entity(spec.male),
            female=graph.entity(spec.female),
        )


@dataclass
class DemographySlice:
    spec: SliceSpec
    graph: KnowledgeGraph = field(repr=False, compare=False)
    handles: ResolvedSpec = field(repr=False)
    humans: frozenset[int]
    gender: dict[int, Gender]
    occupations: dict[int, frozenset[int]]
    # humans carrying both a male and a female gender edge; counted as OTHER
    ambiguous: frozenset[int] = frozenset()
    occupation_universe: frozenset[int] = frozenset()

    @property
    def name(self) -> str:
        return self.spec.name

    def count_gender(self, gender: Gender) -> int:
        return sum(1 for g in self.gender.values() if g is gender)

    @property
    def male_count(self) -> int:
        return self.count_gender(Gender.MALE)

    @property
    def female_count(self) -> int:
        return self.count_gender(Gender.FEMALE)

    def occupation_counts(self) -> tuple[Counter, Counter]:
        """(M_o, F_o) counters over all occupations held by male / female humans."""
        male, female = Counter(), Counter()
        for person, held in self.occupations.items():
            g = self.gender.get(person, Gender.OTHER)
            if g is Gender.MALE:
                male.update(held)
            elif g is Gender.FEMALE:
                female.update(held)
        return male, female


def find_humans(graph: KnowledgeGraph, spec: SliceSpec) -> set[int]:
    """All heads h with (h, instance-of, human) in the graph."""
    instance_of, human = graph.relation(spec.instance_of), graph.entity(spec.human)
    if instance_of is None or human is None:
        return set()
    return {h for h, r, t in graph.triples if r == instance_of and t == human}


def _eligible(
    occupations: dict[int, frozenset[int]], gender: dict[int, Gender]
) -> frozenset[int]:
    male, female = set(), set()
    for person, held in occupations.items():
        g = gender.get(person, Gender.OTHER)
        if g is Gender.MALE:
            male.update(held)
        elif g is Gender.FEMALE:
            female.update(held)
    return frozenset(male & female)


def slice_demography(graph: KnowledgeGraph, spec: SliceSpec) -> DemographySlice:
    """Humans holding a citizenship in spec.countries, with gender and occupation edges."""
    handles = ResolvedSpec.resolve(graph, spec)
    candidates = find_humans(graph, spec)

    humans = frozenset(
        h
        for h in candidates
        if any(r == handles.citizenship and t in handles.countries for r, t in graph.out_edges(h))
    )

    gender: dict[int, Gender] = {}
    occupations: dict[int, frozenset[int]] = {}
    ambiguous: set[int] = set()
    for h in humans:
        tails = graph.out_edges(h)
        is_male = any(r == handles.gender and t == handles.male for r, t in tails)
        is_female = any(r == handles.gender and t == handles.female for r, t in tails)
        if is_male and is_female:
            ambiguous.add(h)
            gender[h] = Gender.OTHER
        elif is_male:
            gender[h] = Gender.MALE
        elif is_female:
            gender[h] = Gender.FEMALE
        else:
            gender[h] = Gender.OTHER
        held = frozenset(t for r, t in tails if r == handles.occupation)
        if held:
            occupations[h] = held

    if ambiguous:
        logger.warning(
            "slice '%s': %d humans carry both gender values and are left out of the counts",
            spec.name,
            len(ambiguous),
        )

    demography = DemographySlice(
        spec=spec,
        graph=graph,
        handles=handles,
        humans=humans,
        gender=gender,
        occupations=occupations,
        ambiguous=frozenset(ambiguous),
        occupation_universe=_eligible(occupations, gender),
    )
    logger.info(
        "slice '%s': %d humans (%d male, %d female), %d eligible occupations",
        spec.name,
        len(humans),
        demography.male_count,
        demography.female_count,
        len(demography.occupation_universe),
    )
    return demography


def eligible_occupations(demography: DemographySlice) -> set[int]:
    """Occupations with at least one male and one female holder."""
    return set(_eligible(demography.occupations, demography.gender))


def merge_slices(graph: KnowledgeGraph, slices: Sequence[DemographySlice]) -> KnowledgeGraph:
    """The giant graph over all demographies.

    E is the slice humans plus every tail of their outgoing edges. Kept are the
    triples with both endpoints in E and every triple headed by a slice human.
    Triples are visited in source order, so the result does not depend on the
    order of `slices`.
    """
    humans: set[int] = set()
    for demography in slices:
        humans.update(demography.humans)
    members = set(humans)
    for h in humans:
        members.update(t for _, t in graph.out_edges(h))

    rows = (
        graph.external_triple(triple)
        for triple in graph.triples
        if triple.head in humans or (triple.head in members and triple.tail in members)
    )
    giant = KnowledgeGraph.from_external(rows, labels=graph.labels)
    logger.info(
        "giant graph: %d triples over %d entities from %d slices",
        giant.num_triples,
        giant.num_entities,
        len(slices),
    )
    return giant


def slice_statistics(giant: KnowledgeGraph, slices: Sequence[DemographySlice]) -> pd.DataFrame:
    """Per-demography counts of entities, triples, humans and occupations."""
    rows = []
    for demography in slices:
        source = demography.graph
        human_ids = {source.entity_id(h) for h in demography.humans}
        handles = {giant.entity(x) for x in human_ids} - {None}
        triples = [t for t in giant.triples if t.head in handles or t.tail in handles]
        entities = {t.head for t in triples} | {t.tail for t in triples}
        all_occupations = set().union(*demography.occupations.values()) if demography.occupations else set()
        rows.append(
            {
                "demography": demography.name,
                "entities": len(entities),
                "triples": len(triples),
                "humans": len(demography.humans),
                "male": demography.male_count,
                "female": demography.female_count,
                "other": demography.count_gender(Gender.OTHER),
                "ambiguous": len(demography.ambiguous),
                "occupations": len(all_occupations),
                "eligible_occupations": len(demography.occupation_universe),
            }
        )
    return pd.DataFrame(
        rows,
        columns=[
            "demography",
            "entities",
            "triples",
            "humans",
            "male",
            "female",
            "other",
            "ambiguous",
            "occupations",
            "eligible_occupations",
        ],
    )
