import numpy as np
import pytest

from kg import slicer
from kg.slicer import SliceSpec
from kg.store import KnowledgeGraph
from models.models import EmbeddingTable, ModelKind


def person(
    human: str,
    country: str | None = "C1",
    gender: str | None = slicer.MALE,
    occupations: tuple[str, ...] = (),
) -> list[tuple[str, str, str]]:
    rows = [(human, slicer.INSTANCE_OF, slicer.HUMAN)]
    if country is not None:
        rows.append((human, slicer.CITIZENSHIP, country))
    if gender is not None:
        rows.append((human, slicer.GENDER, gender))
    rows += [(human, slicer.OCCUPATION, o) for o in occupations]
    return rows


@pytest.fixture
def make_person():
    return person


@pytest.fixture
def make_graph():
    def build(rows, labels=None) -> KnowledgeGraph:
        return KnowledgeGraph.from_external(rows, labels)

    return build


@pytest.fixture
def spec():
    def build(name: str = "c1", countries: tuple[str, ...] = ("C1",)) -> SliceSpec:
        return SliceSpec(name=name, countries=countries)

    return build


@pytest.fixture
def make_table():
    """Table over a graph's vocabulary; unlisted vectors are zero."""

    def build(
        graph: KnowledgeGraph,
        kind: ModelKind,
        dim: int,
        entities: dict[str, list[float]] | None = None,
        relations: dict[str, list[float]] | None = None,
    ) -> EmbeddingTable:
        entity_ids = tuple(graph.entities.ids())
        relation_ids = tuple(graph.relations.ids())
        e = np.zeros((len(entity_ids), dim))
        r = np.zeros((len(relation_ids), dim))
        for i, x in enumerate(entity_ids):
            if entities and x in entities:
                e[i] = entities[x]
        for i, x in enumerate(relation_ids):
            if relations and x in relations:
                r[i] = relations[x]
        return EmbeddingTable(kind, e, r, entity_ids, relation_ids)

    return build


@pytest.fixture
def planted_slice_graph(make_graph):
    """Five men and five women; QA is +0.6, QB is -0.6 and QC is 0 on the data metric."""
    rows = []
    for i in range(5):
        occupations = ["QC"] if i < 2 else []
        occupations += ["QA"] if i < 4 else ["QB"]
        rows += person(f"M{i}", "C1", slicer.MALE, tuple(occupations))
    for i in range(5):
        occupations = ["QC"] if i < 2 else []
        occupations += ["QB"] if i < 4 else ["QA"]
        rows += person(f"F{i}", "C1", slicer.FEMALE, tuple(occupations))
    return make_graph(rows, {"QA": "planted male", "QB": "planted female"})
