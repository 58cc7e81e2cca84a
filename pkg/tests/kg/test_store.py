import io
import json

import pytest

from exceptions import IngestError, UnknownHandleError
from kg.store import (
    KnowledgeGraph,
    Triple,
    TripleFormat,
    is_literal,
    label_of,
    parse_labels,
    parse_triples,
    read_triples,
    write_ingest_report,
)


def parse(text: str, **fmt):
    return parse_triples(io.StringIO(text), TripleFormat(**fmt))


def test_duplicate_triples_are_dropped():
    graph, report = parse("Q1\tP31\tQ5\nQ1\tP27\tQ30\nQ1\tP31\tQ5\n")
    assert graph.num_triples == 2
    assert report.duplicates_dropped == 1
    assert report.triples_kept == 2


def test_empty_stream():
    graph, report = parse("")
    assert graph.num_triples == 0
    assert graph.num_entities == 0
    assert report.lines_read == 0


def test_entity_count_is_distinct_heads_and_tails():
    lines = [
        ("Q1", "P31", "Q5"),
        ("Q2", "P31", "Q5"),
        ("Q1", "P27", "Q30"),
        ("Q2", "P106", "Q33999"),
        ("Q3", "P21", "Q6581072"),
    ]
    graph, _ = parse("".join(f"{h}\t{r}\t{t}\n" for h, r, t in lines))
    assert graph.num_triples == 5
    assert graph.num_entities == len({h for h, _, _ in lines} | {t for _, _, t in lines})
    assert graph.num_relations == 4


def test_handles_follow_first_appearance():
    graph, _ = parse("Q1\tP31\tQ5\nQ2\tP31\tQ5\n")
    assert graph.entities.ids() == ["Q1", "Q5", "Q2"]
    assert graph.triples[1] == Triple(2, 0, 1)
    assert graph.external_triple(graph.triples[1]) == ("Q2", "P31", "Q5")


def test_parsing_is_deterministic():
    text = "Q3\tP1\tQ4\nQ1\tP2\tQ3\nQ4\tP1\tQ1\n"
    a, _ = parse(text)
    b, _ = parse(text)
    assert a.triples == b.triples
    assert a.entities.ids() == b.entities.ids()


def test_out_index_lists_every_edge():
    graph, _ = parse("Q1\tP31\tQ5\nQ1\tP27\tQ30\nQ1\tP106\tQ7\nQ2\tP31\tQ5\n")
    q1 = graph.entity("Q1")
    assert len(graph.out_edges(q1)) == 3
    assert graph.out_edges(graph.entity("Q5")) == []
    assert Triple(q1, graph.relation("P31"), graph.entity("Q5")) in graph


def test_header_is_detected():
    graph, report = parse("node1\tlabel\tnode2\nQ1\tP31\tQ5\n")
    assert report.header_skipped
    assert graph.num_triples == 1


def test_forced_header_skips_first_line():
    graph, report = parse("Q0\tP0\tQ0\nQ1\tP31\tQ5\n", has_header=True)
    assert report.header_skipped
    assert graph.entity("Q0") is None


def test_literal_tails_dropped_unless_kept(caplog):
    text = 'Q1\tP1082\t"42"\nQ1\tP1813\t"Q"@en\nQ1\tP569\tx^^xsd:date\nQ1\tP31\tQ5\n'
    with caplog.at_level("WARNING"):
        graph, report = parse(text)
    assert graph.num_triples == 1
    assert report.literals_dropped == 3
    assert "literal tails" in caplog.text

    graph, report = parse(text, keep_literal_tails=True)
    assert graph.num_triples == 4
    assert report.literals_dropped == 0


def test_integer_ids_are_entities():
    graph, report = parse("1\t0\t2\n3\t0\t4\n5\t1\t2\n")
    assert graph.num_triples == 3
    assert graph.num_entities == 5
    assert graph.num_relations == 2
    assert report.literals_dropped == 0
    assert graph.external_triple(graph.triples[2]) == ("5", "1", "2")


def test_quoted_heads_are_not_filtered():
    graph, report = parse('"x"\tP1\tQ1\n')
    assert graph.num_triples == 1
    assert report.literals_dropped == 0


@pytest.mark.parametrize(
    "value, expected",
    [
        ("Q42", False),
        ("P31", False),
        ("1990", False),
        ("-3.5e2", False),
        ('"text"@en', True),
        ("'x'", True),
        ("x^^xsd:date", True),
    ],
)
def test_is_literal(value, expected):
    assert is_literal(value) is expected


def test_malformed_and_comment_lines_are_counted():
    graph, report = parse("# comment\n\nQ1\tP31\nQ1\t\tQ5\nQ1\tP31\tQ5\n")
    assert graph.num_triples == 1
    assert report.malformed_skipped == 2
    assert report.comments_skipped == 2


def test_other_delimiter():
    graph, _ = parse("Q1 P31 Q5\n", delimiter=" ")
    assert graph.external_triple(graph.triples[0]) == ("Q1", "P31", "Q5")


def test_unreadable_file_raises(tmp_path):
    with pytest.raises(IngestError):
        read_triples(tmp_path / "missing.tsv")


def test_labels_single_entry():
    labels, report = parse_labels(io.StringIO("Q5\thuman\n"))
    assert labels == {"Q5": "human"}
    assert report.labels_kept == 1


def test_labels_last_wins():
    labels, _ = parse_labels(io.StringIO("Q5\thuman\nQ5\tperson\n"))
    assert labels == {"Q5": "person"}


def test_labels_count():
    labels, report = parse_labels(io.StringIO("Q1\ta\nQ2\tb\nQ3\tc\nQ4\td\nbroken\n"))
    assert len(labels) == 4
    assert report.malformed_skipped == 1


def test_label_of_falls_back_to_external_id():
    graph = KnowledgeGraph.from_external([("Q1", "P31", "Q99")], labels={"Q1": "Ada", "P31": "instance of"})
    assert label_of(graph, graph.entity("Q1")) == "Ada"
    assert label_of(graph, graph.entity("Q99")) == "Q99"
    assert label_of(graph, graph.relation("P31"), kind="relation") == "instance of"


def test_label_of_invalid_handle():
    graph = KnowledgeGraph.from_external([("Q1", "P31", "Q5")])
    with pytest.raises(UnknownHandleError):
        label_of(graph, 17)
    with pytest.raises(LookupError):
        label_of(graph, -1)


def test_ingest_report_is_written(tmp_path):
    _, report = parse("Q1\tP31\tQ5\nQ1\tP31\tQ5\n")
    path = write_ingest_report(report, tmp_path / "ingest" / "report.json")
    written = json.loads(path.read_text())
    assert written["triples_kept"] == 1
    assert written["duplicates_dropped"] == 1
