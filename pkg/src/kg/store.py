import json
import re
from collections import namedtuple
from collections.abc import Iterable
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from exceptions import IngestError, UnknownHandleError
from utils import get_logger

logger = get_logger(__name__)

Triple = namedtuple("Triple", ["head", "rel", "tail"])

# first three fields of header lines we recognise (KGTK edge files and plain TSV)
KNOWN_HEADERS = {
    ("node1", "label", "node2"),
    ("head", "relation", "tail"),
    ("subject", "predicate", "object"),
    ("h", "r", "t"),
}

# quoted values (plain, "x"@en language-tagged) and "x"^^type typed values
_LITERAL = re.compile(r"""^["']|\^\^""")


def is_literal(value: str) -> bool:
    """Quoted, language-tagged and typed values are literals; bare tokens (Q42, 1990) are ids."""
    return bool(_LITERAL.search(value))


class Vocabulary:
    """Interns external identifiers into contiguous handles starting at 0."""

    def __init__(self, ids: Iterable[str] = ()):
        self._ids: list[str] = []
        self._index: dict[str, int] = {}
        for x in ids:
            self.intern(x)

    def intern(self, external_id: str) -> int:
        handle = self._index.get(external_id)
        if handle is None:
            handle = len(self._ids)
            self._index[external_id] = handle
            self._ids.append(external_id)
        return handle

    def resolve(self, handle: int) -> str:
        if not 0 <= handle < len(self._ids):
            raise UnknownHandleError(f"unknown handle {handle}")
        return self._ids[handle]

    def get(self, external_id: str) -> int | None:
        return self._index.get(external_id)

    def ids(self) -> list[str]:
        return list(self._ids)

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, external_id: str) -> bool:
        return external_id in self._index


@dataclass
class TripleFormat:
    delimiter: str = "\t"
    comment_prefix: str = "#"
    # None: skip the first line only when it looks like a known header
    has_header: bool | None = None
    keep_literal_tails: bool = False


@dataclass
class IngestReport:
    lines_read: int = 0
    triples_kept: int = 0
    duplicates_dropped: int = 0
    malformed_skipped: int = 0
    literals_dropped: int = 0
    comments_skipped: int = 0
    header_skipped: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LabelReport:
    lines_read: int = 0
    labels_kept: int = 0
    malformed_skipped: int = 0


class KnowledgeGraph:
    """Interned triples with an out-edge index. Immutable once built."""

    def __init__(
        self,
        entities: Vocabulary,
        relations: Vocabulary,
        triples: list[Triple],
        labels: dict[str, str] | None = None,
    ):
        self.entities = entities
        self.relations = relations
        self.triples: tuple[Triple, ...] = tuple(triples)
        self.labels: dict[str, str] = dict(labels or {})
        self.out_index: dict[int, list[tuple[int, int]]] = {}
        for h, r, t in self.triples:
            self.out_index.setdefault(h, []).append((r, t))
        self._triple_set = frozenset(self.triples)

    @classmethod
    def from_external(
        cls, rows: Iterable[tuple[str, str, str]], labels: dict[str, str] | None = None
    ) -> "KnowledgeGraph":
        """Build a graph with fresh handles from external-id triples.

        Handles follow first appearance; repeated triples are kept once.
        """
        entities, relations = Vocabulary(), Vocabulary()
        seen: set[Triple] = set()
        triples: list[Triple] = []
        for head, rel, tail in rows:
            triple = Triple(entities.intern(head), relations.intern(rel), entities.intern(tail))
            if triple not in seen:
                seen.add(triple)
                triples.append(triple)
        return cls(entities, relations, triples, labels)

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    @property
    def num_triples(self) -> int:
        return len(self.triples)

    def __len__(self) -> int:
        return len(self.triples)

    def __contains__(self, triple: Triple) -> bool:
        return triple in self._triple_set

    def entity_id(self, handle: int) -> str:
        return self.entities.resolve(handle)

    def relation_id(self, handle: int) -> str:
        return self.relations.resolve(handle)

    def entity(self, external_id: str) -> int | None:
        return self.entities.get(external_id)

    def relation(self, external_id: str) -> int | None:
        return self.relations.get(external_id)

    def out_edges(self, head: int) -> list[tuple[int, int]]:
        return self.out_index.get(head, [])

    def external_triple(self, triple: Triple) -> tuple[str, str, str]:
        return (
            self.entity_id(triple.head),
            self.relation_id(triple.rel),
            self.entity_id(triple.tail),
        )

    @cached_property
    def triple_array(self) -> np.ndarray:
        """(n, 3) int64 array of (head, rel, tail) in triple order."""
        if not self.triples:
            return np.empty((0, 3), dtype=np.int64)
        return np.asarray(self.triples, dtype=np.int64)

    def with_labels(self, labels: dict[str, str]) -> "KnowledgeGraph":
        merged = {**self.labels, **labels}
        return KnowledgeGraph(self.entities, self.relations, list(self.triples), merged)


def _is_header(fields: list[str]) -> bool:
    return tuple(f.strip().lower() for f in fields[:3]) in KNOWN_HEADERS


def parse_triples(
    lines: Iterable[str], fmt: TripleFormat | None = None
) -> tuple[KnowledgeGraph, IngestReport]:
    """Parses TSV triple lines into an interned graph.

    Args:
        lines (Iterable[str]): head, relation, tail [, extra columns ignored]
        fmt (TripleFormat, optional): delimiter, header and literal handling

    Returns:
        tuple[KnowledgeGraph, IngestReport]: the graph and ingest counts
    """
    fmt = fmt or TripleFormat()
    report = IngestReport()
    entities, relations = Vocabulary(), Vocabulary()
    seen: set[Triple] = set()
    triples: list[Triple] = []

    try:
        for line in lines:
            report.lines_read += 1
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith(fmt.comment_prefix):
                report.comments_skipped += 1
                continue
            fields = line.split(fmt.delimiter)
            if report.lines_read == 1 and (
                fmt.has_header or (fmt.has_header is None and _is_header(fields))
            ):
                report.header_skipped = True
                continue
            if len(fields) < 3 or not all(f.strip() for f in fields[:3]):
                report.malformed_skipped += 1
                continue
            head, rel, tail = (f.strip() for f in fields[:3])
            if not fmt.keep_literal_tails and is_literal(tail):
                report.literals_dropped += 1
                continue
            triple = Triple(entities.intern(head), relations.intern(rel), entities.intern(tail))
            if triple in seen:
                report.duplicates_dropped += 1
                continue
            seen.add(triple)
            triples.append(triple)
    except (OSError, UnicodeDecodeError) as e:
        raise IngestError(f"unreadable triple stream: {e}") from e

    report.triples_kept = len(triples)
    if report.malformed_skipped:
        logger.warning("skipped %d malformed triple lines", report.malformed_skipped)
    if report.literals_dropped:
        logger.warning("dropped %d triples with literal tails", report.literals_dropped)
    logger.info(
        "ingested %d triples over %d entities and %d relations (%d duplicates dropped)",
        len(triples),
        len(entities),
        len(relations),
        report.duplicates_dropped,
    )
    return KnowledgeGraph(entities, relations, triples), report


def parse_labels(lines: Iterable[str], delimiter: str = "\t") -> tuple[dict[str, str], LabelReport]:
    """id<TAB>label lines into a map; a later duplicate id overwrites the earlier one."""
    labels: dict[str, str] = {}
    report = LabelReport()
    try:
        for line in lines:
            report.lines_read += 1
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split(delimiter)
            if len(fields) < 2 or not fields[0].strip():
                report.malformed_skipped += 1
                continue
            labels[fields[0].strip()] = fields[1].strip()
    except (OSError, UnicodeDecodeError) as e:
        raise IngestError(f"unreadable label stream: {e}") from e
    report.labels_kept = len(labels)
    if report.malformed_skipped:
        logger.warning("skipped %d malformed label lines", report.malformed_skipped)
    return labels, report


def label_of(graph: KnowledgeGraph, handle: int, kind: str = "entity") -> str:
    """Label of an entity (or relation, kind="relation"), else its external id."""
    external_id = graph.relation_id(handle) if kind == "relation" else graph.entity_id(handle)
    return graph.labels.get(external_id, external_id)


def read_triples(path: str | Path, fmt: TripleFormat | None = None) -> tuple[KnowledgeGraph, IngestReport]:
    try:
        with open(path, encoding="utf-8") as f:
            return parse_triples(f, fmt)
    except OSError as e:
        raise IngestError(f"cannot read triples from {path}: {e}") from e


def read_labels(path: str | Path) -> dict[str, str]:
    try:
        with open(path, encoding="utf-8") as f:
            labels, _ = parse_labels(f)
    except OSError as e:
        raise IngestError(f"cannot read labels from {path}: {e}") from e
    return labels


def write_ingest_report(report: IngestReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
