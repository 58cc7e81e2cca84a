import numpy as np
import pytest

from bias.embedding import embedding_bias_scores, perturb_person, perturb_vectors
from bias.metrics import Direction
from exceptions import ConfigError, MetricFaultError, UndefinedMetricError
from kg import slicer
from kg.slicer import slice_demography
from models.models import EmbeddingTable, ModelKind

MALE, FEMALE = slicer.MALE, slicer.FEMALE


@pytest.fixture
def two_people(make_graph, make_person, spec):
    rows = make_person("H1", "C1", MALE, ("O1", "O2")) + make_person("H2", "C1", FEMALE, ("O1", "O2"))
    graph = make_graph(rows)
    return graph, slice_demography(graph, spec())


def hand_table(graph, make_table, male=(1.0, 0.0), female=(0.0, 1.0)):
    return make_table(
        graph,
        ModelKind.DISTMULT,
        2,
        entities={
            "H1": [0.3, -0.7],
            "H2": [1.1, 0.4],
            MALE: list(male),
            FEMALE: list(female),
            "O1": [3.0, 1.0],
            "O2": [1.0, 2.0],
        },
        relations={"P21": [1.0, 2.0], "P106": [1.0, 1.0]},
    )


def by_id(graph, table):
    return {graph.entity_id(o): v for o, v in table.scores.items()}


def test_distmult_hand_calculation(two_people, make_table):
    graph, demography = two_people
    table = hand_table(graph, make_table)
    # every head moves by alpha * r_g * (e_male - e_female) = 0.1 * (1, -2)
    male = by_id(graph, embedding_bias_scores(table, demography, Direction.MALE, alpha=0.1))
    assert male == {"O1": pytest.approx(0.1, rel=1e-9), "O2": pytest.approx(-0.3, rel=1e-9)}

    female = by_id(graph, embedding_bias_scores(table, demography, Direction.FEMALE, alpha=0.1))
    assert female == {"O1": pytest.approx(-0.1, rel=1e-9), "O2": pytest.approx(0.3, rel=1e-9)}


def test_zero_alpha_gives_zero_bias(two_people, make_table):
    graph, demography = two_people
    table = embedding_bias_scores(hand_table(graph, make_table), demography, Direction.MALE, alpha=0.0)
    assert set(table.scores.values()) == {0.0}


@pytest.mark.parametrize("kind", list(ModelKind))
def test_identical_poles_give_zero_bias(two_people, make_table, kind):
    graph, demography = two_people
    rng = np.random.default_rng(1)
    table = make_table(graph, kind, 4)
    table.entities[:] = rng.normal(size=table.entities.shape)
    table.relations[:] = rng.normal(size=table.relations.shape)
    table.entities[table.entity_handle(FEMALE)] = table.entities[table.entity_handle(MALE)]
    scores = embedding_bias_scores(table, demography, Direction.MALE, alpha=0.5)
    assert all(v == 0.0 for v in scores.scores.values())


def test_bias_is_linear_in_alpha(two_people, make_table):
    graph, demography = two_people
    table = hand_table(graph, make_table)
    small = embedding_bias_scores(table, demography, Direction.MALE, alpha=0.1).scores
    large = embedding_bias_scores(table, demography, Direction.MALE, alpha=0.3).scores
    for o in small:
        assert large[o] == pytest.approx(3 * small[o], rel=1e-9)


@pytest.mark.parametrize("kind", [ModelKind.DISTMULT, ModelKind.COMPLEX])
def test_bilinear_models_are_linear_in_alpha(two_people, make_table, kind):
    graph, demography = two_people
    rng = np.random.default_rng(8)
    for _ in range(20):
        table = make_table(graph, kind, 8)
        table.entities[:] = rng.normal(size=table.entities.shape)
        table.relations[:] = rng.normal(size=table.relations.shape)
        alpha = float(rng.uniform(0.01, 0.5))
        factor = float(rng.uniform(1.5, 10))
        base = embedding_bias_scores(table, demography, Direction.MALE, alpha=alpha).scores
        scaled = embedding_bias_scores(table, demography, Direction.MALE, alpha=alpha * factor).scores
        for o in base:
            assert scaled[o] == pytest.approx(factor * base[o], rel=1e-9, abs=1e-12)


def test_male_and_female_steps_are_negations(two_people, make_table):
    graph, _ = two_people
    table = hand_table(graph, make_table)
    args = (graph.entity("H1"), graph.relation("P21"), graph.entity(MALE), graph.entity(FEMALE), 0.2)
    before = table.entities[graph.entity("H1")].copy()
    to_male = perturb_person(table, *args, Direction.MALE) - before
    to_female = perturb_person(table, *args, Direction.FEMALE) - before
    np.testing.assert_allclose(to_male, -to_female)
    np.testing.assert_allclose(to_male, [0.2, -0.4])


def test_symmetric_poles_leave_the_person_unchanged(two_people, make_table):
    graph, _ = two_people
    table = hand_table(graph, make_table, male=(0.5, 0.5), female=(0.5, 0.5))
    h1 = graph.entity("H1")
    moved = perturb_person(
        table, h1, graph.relation("P21"), graph.entity(MALE), graph.entity(FEMALE), 0.3, Direction.MALE
    )
    np.testing.assert_array_equal(moved, table.entities[h1])


def test_stored_table_is_not_modified(two_people, make_table):
    graph, demography = two_people
    table = hand_table(graph, make_table)
    entities, relations = table.entities.copy(), table.relations.copy()
    embedding_bias_scores(table, demography, Direction.FEMALE, alpha=0.4, steps=3)
    np.testing.assert_array_equal(table.entities, entities)
    np.testing.assert_array_equal(table.relations, relations)


def test_more_steps_move_further_for_transe(two_people, make_table):
    graph, _ = two_people
    table = make_table(graph, ModelKind.TRANSE_L2, 2, entities={MALE: [1.0, 0.0], FEMALE: [-1.0, 0.0]})
    vectors = np.zeros((1, 2))
    one = perturb_vectors(table, vectors, graph.relation("P21"), graph.entity(MALE), graph.entity(FEMALE), 0.1, Direction.MALE)
    two = perturb_vectors(
        table, vectors, graph.relation("P21"), graph.entity(MALE), graph.entity(FEMALE), 0.1, Direction.MALE, steps=2
    )
    # -|e - m|^2 + |e - f|^2 has gradient 2(m - f) = (4, 0)
    np.testing.assert_allclose(one, [[0.4, 0.0]])
    np.testing.assert_allclose(two, [[0.8, 0.0]])


def test_signed_direction_and_negative_alpha_are_rejected(two_people, make_table):
    graph, demography = two_people
    table = hand_table(graph, make_table)
    with pytest.raises(ConfigError):
        embedding_bias_scores(table, demography, Direction.SIGNED)
    with pytest.raises(ConfigError):
        embedding_bias_scores(table, demography, Direction.MALE, alpha=-1.0)


def test_low_coverage_is_a_fault(two_people):
    graph, demography = two_people
    ids = ("O1", "O2", MALE, FEMALE)
    table = EmbeddingTable(ModelKind.DISTMULT, np.ones((4, 2)), np.ones((2, 2)), ids, ("P21", "P106"))
    with pytest.raises(MetricFaultError, match="coverage"):
        embedding_bias_scores(table, demography, Direction.MALE)


def test_partial_coverage_is_reported(two_people):
    graph, demography = two_people
    ids = ("H1", "O1", "O2", MALE, FEMALE)
    table = EmbeddingTable(ModelKind.DISTMULT, np.ones((5, 2)), np.ones((2, 2)), ids, ("P21", "P106"))
    scores = embedding_bias_scores(table, demography, Direction.MALE)
    assert scores.coverage.humans_total == 2
    assert scores.coverage.humans_found == 1
    assert scores.coverage.occupation_ratio == 1.0


def test_missing_gender_relation_is_a_fault(two_people):
    graph, demography = two_people
    ids = ("H1", "H2", "O1", "O2", MALE, FEMALE)
    table = EmbeddingTable(ModelKind.DISTMULT, np.ones((6, 2)), np.ones((1, 2)), ids, ("P106",))
    with pytest.raises(MetricFaultError, match="gender relation"):
        embedding_bias_scores(table, demography, Direction.MALE)


def test_slice_without_eligible_occupations(make_graph, make_person, spec, make_table):
    graph = make_graph(make_person("H1", "C1", MALE, ("O1",)) + make_person("H2", "C1", FEMALE, ("O2",)))
    demography = slice_demography(graph, spec())
    with pytest.raises(UndefinedMetricError):
        embedding_bias_scores(make_table(graph, ModelKind.DISTMULT, 2), demography, Direction.MALE)


def test_provenance_names_the_model(two_people, make_table):
    graph, demography = two_people
    table = embedding_bias_scores(hand_table(graph, make_table), demography, Direction.MALE)
    assert table.provenance == "embed-bias(distmult)"
    assert table.demography == "c1"
    assert table.direction is Direction.MALE
