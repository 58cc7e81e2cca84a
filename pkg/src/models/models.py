import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np

from exceptions import ConfigError, DataError, UnknownHandleError
from utils import get_logger

logger = get_logger(__name__)


class ModelKind(Enum):
    TRANSE_L1 = "transe-l1"
    TRANSE_L2 = "transe-l2"
    COMPLEX = "complex"
    DISTMULT = "distmult"

    @classmethod
    def parse(cls, value: "str | ModelKind") -> "ModelKind":
        if isinstance(value, cls):
            return value
        name = str(value).strip().lower()
        if name == "transe":
            return cls.TRANSE_L1
        try:
            return cls(name)
        except ValueError as e:
            raise ConfigError(f"unknown model kind '{value}'") from e

    @property
    def norm(self) -> int | None:
        return {ModelKind.TRANSE_L1: 1, ModelKind.TRANSE_L2: 2}.get(self)

    @property
    def is_translational(self) -> bool:
        return self.norm is not None

    @property
    def default_negatives(self) -> int:
        return 10 if self.is_translational else 3


@dataclass
class EmbeddingTable:
    """Entity and relation vectors of one trained model.

    For ComplEx the first half of every vector is the real part and the second
    half the imaginary part.
    """

    kind: ModelKind
    entities: np.ndarray
    relations: np.ndarray
    entity_ids: tuple[str, ...] = ()
    relation_ids: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.entities.shape[1])

    @property
    def num_entities(self) -> int:
        return int(self.entities.shape[0])

    @property
    def num_relations(self) -> int:
        return int(self.relations.shape[0])

    @cached_property
    def entity_index(self) -> dict[str, int]:
        return {x: i for i, x in enumerate(self.entity_ids)}

    @cached_property
    def relation_index(self) -> dict[str, int]:
        return {x: i for i, x in enumerate(self.relation_ids)}

    def entity_handle(self, external_id: str) -> int | None:
        return self.entity_index.get(external_id)

    def relation_handle(self, external_id: str) -> int | None:
        return self.relation_index.get(external_id)

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(
            self.kind,
            self.entities.copy(),
            self.relations.copy(),
            self.entity_ids,
            self.relation_ids,
            dict(self.meta),
        )

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.entities).all() and np.isfinite(self.relations).all())


def _halves(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    half = x.shape[-1] // 2
    return x[..., :half], x[..., half:]


def scores(kind: ModelKind, h: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Plausibility of (h, r, t) over the last axis; inputs broadcast against each other."""
    if kind is ModelKind.TRANSE_L1:
        return -np.abs(h + r - t).sum(axis=-1)
    if kind is ModelKind.TRANSE_L2:
        # squared distance: the head gradient is then exactly -2(h + r - t)
        return -np.square(h + r - t).sum(axis=-1)
    if kind is ModelKind.DISTMULT:
        return (h * r * t).sum(axis=-1)
    h_re, h_im = _halves(h)
    r_re, r_im = _halves(r)
    t_re, t_im = _halves(t)
    # Re(<r, h, conj(t)>)
    return (
        r_re * h_re * t_re + r_re * h_im * t_im + r_im * h_re * t_im - r_im * h_im * t_re
    ).sum(axis=-1)


def gradients(
    kind: ModelKind, h: np.ndarray, r: np.ndarray, t: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic gradients of `scores` w.r.t. head, relation and tail."""
    h, r, t = np.broadcast_arrays(h, r, t)
    if kind is ModelKind.TRANSE_L1:
        s = np.sign(h + r - t)  # sign(0) = 0
        return -s, -s, s
    if kind is ModelKind.TRANSE_L2:
        x = 2.0 * (h + r - t)
        return -x, -x, x
    if kind is ModelKind.DISTMULT:
        return r * t, h * t, h * r
    h_re, h_im = _halves(h)
    r_re, r_im = _halves(r)
    t_re, t_im = _halves(t)
    grad_h = np.concatenate([r_re * t_re + r_im * t_im, r_re * t_im - r_im * t_re], axis=-1)
    grad_r = np.concatenate([h_re * t_re + h_im * t_im, h_re * t_im - h_im * t_re], axis=-1)
    grad_t = np.concatenate([r_re * h_re - r_im * h_im, r_re * h_im + r_im * h_re], axis=-1)
    return grad_h, grad_r, grad_t


def _check(table: EmbeddingTable, h: int, r: int, t: int) -> None:
    if not (0 <= h < table.num_entities and 0 <= t < table.num_entities):
        raise UnknownHandleError(f"entity handle out of range: ({h}, {t})")
    if not 0 <= r < table.num_relations:
        raise UnknownHandleError(f"relation handle out of range: {r}")


def score(table: EmbeddingTable, h: int, r: int, t: int) -> float:
    _check(table, h, r, t)
    return float(scores(table.kind, table.entities[h], table.relations[r], table.entities[t]))


def grad_score_wrt_head(table: EmbeddingTable, h: int, r: int, t: int) -> np.ndarray:
    _check(table, h, r, t)
    grad_h, _, _ = gradients(table.kind, table.entities[h], table.relations[r], table.entities[t])
    return grad_h.copy()


def score_triples(table: EmbeddingTable, triples: np.ndarray) -> np.ndarray:
    """Scores for an (..., 3) integer array of (head, rel, tail) handles."""
    triples = np.asarray(triples, dtype=np.int64)
    return scores(
        table.kind,
        table.entities[triples[..., 0]],
        table.relations[triples[..., 1]],
        table.entities[triples[..., 2]],
    )


def init_params(
    kind: ModelKind,
    dim: int,
    num_entities: int,
    num_relations: int,
    seed: int,
    entity_ids: tuple[str, ...] = (),
    relation_ids: tuple[str, ...] = (),
) -> EmbeddingTable:
    """Uniform initialisation on [-6/sqrt(d), 6/sqrt(d)], deterministic in `seed`."""
    if dim <= 0:
        raise ConfigError(f"embedding dimension must be positive, got {dim}")
    if kind is ModelKind.COMPLEX and dim % 2:
        raise ConfigError(f"ComplEx needs an even dimension, got {dim}")
    rng = np.random.default_rng(seed)
    bound = 6.0 / math.sqrt(dim)
    entities = rng.uniform(-bound, bound, size=(num_entities, dim))
    relations = rng.uniform(-bound, bound, size=(num_relations, dim))
    return EmbeddingTable(kind, entities, relations, tuple(entity_ids), tuple(relation_ids))


def save_table(table: EmbeddingTable, path: str | Path) -> tuple[Path, Path]:
    """Flat little-endian float64 file (entities then relations) plus a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    binary, sidecar = path.with_suffix(".bin"), path.with_suffix(".json")
    np.concatenate(
        [table.entities.astype("<f8").ravel(), table.relations.astype("<f8").ravel()]
    ).tofile(binary)
    sidecar.write_text(
        json.dumps(
            {
                "kind": table.kind.value,
                "dim": table.dim,
                "num_entities": table.num_entities,
                "num_relations": table.num_relations,
                "dtype": "<f8",
                "entity_ids": list(table.entity_ids),
                "relation_ids": list(table.relation_ids),
                "meta": table.meta,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return binary, sidecar


def load_table(path: str | Path) -> EmbeddingTable:
    path = Path(path)
    try:
        info = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
        flat = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    except (OSError, ValueError) as e:
        raise DataError(f"cannot load embedding table {path}: {e}") from e
    n_e, n_r, dim = info["num_entities"], info["num_relations"], info["dim"]
    if flat.size != (n_e + n_r) * dim:
        raise DataError(f"embedding table {path} has {flat.size} values, expected {(n_e + n_r) * dim}")
    split = n_e * dim
    return EmbeddingTable(
        kind=ModelKind.parse(info["kind"]),
        entities=flat[:split].reshape(n_e, dim).astype(np.float64),
        relations=flat[split:].reshape(n_r, dim).astype(np.float64),
        entity_ids=tuple(info["entity_ids"]),
        relation_ids=tuple(info["relation_ids"]),
        meta=info.get("meta", {}),
    )
