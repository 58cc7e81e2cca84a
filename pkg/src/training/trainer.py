import time
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.special import logsumexp, softmax
from tqdm import tqdm

from exceptions import DataError, NumericFault, TrainingDivergedError
from kg.store import KnowledgeGraph, Triple
from models.models import EmbeddingTable, ModelKind, gradients, init_params, scores
from training.sampling import CorruptionPolicy, corrupt_batch
from utils import get_logger, progress_disabled

logger = get_logger(__name__)


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ModelKind
    dim: int = Field(default=100, gt=0)
    epochs: int = Field(default=200, ge=0)
    batch_size: int = Field(default=512, gt=0)
    learning_rate: float = Field(default=0.05, gt=0)
    # None: 10 for TransE, 3 for ComplEx and DistMult
    negatives: int | None = Field(default=None, gt=0)
    seed: int = 0
    corruption: CorruptionPolicy = CorruptionPolicy.BOTH
    unit_norm_entities: bool = False

    @field_validator("kind", mode="before")
    @classmethod
    def _parse_kind(cls, value):
        return ModelKind.parse(value)

    @property
    def negatives_per_positive(self) -> int:
        return self.negatives or self.kind.default_negatives


@dataclass
class EpochLog:
    epoch: int
    mean_loss: float
    wall_time: float


def softmax_nll(batch_scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise -log softmax of column 0 and its derivative w.r.t. every score.

    Column 0 holds the positive, the rest its negatives.
    """
    loss = logsumexp(batch_scores, axis=-1) - batch_scores[..., 0]
    d_scores = softmax(batch_scores, axis=-1)
    d_scores[..., 0] -= 1.0
    return loss, d_scores


def nll_loss_and_grads(
    pos_score: float,
    neg_scores: Sequence[float],
    score_grads: Sequence[np.ndarray] | None = None,
) -> tuple[float, np.ndarray | None]:
    """Multiclass NLL of one positive against its negatives.

    loss = -s+ + log sum exp over {pos} and the negatives. `score_grads` are the
    gradients of each score (positive first) w.r.t. the parameters; the
    returned gradient chains the loss through them.
    """
    if len(neg_scores) < 1:
        raise NumericFault("NLL loss needs at least one negative")
    row = np.concatenate([[pos_score], np.asarray(neg_scores, dtype=np.float64)])
    if not np.isfinite(row).all():
        raise NumericFault(f"non-finite score in NLL loss: positive={pos_score}, negatives={list(neg_scores)}")
    loss, d_scores = softmax_nll(row)
    if score_grads is None:
        return float(loss), None
    grads = np.asarray(score_grads, dtype=np.float64)
    return float(loss), np.tensordot(d_scores, grads, axes=1)


class Trainer:
    def __init__(self, graph: KnowledgeGraph, config: TrainConfig, progress: bool = True):
        """Negative-sampling SGD over the triples of one graph

        Args:
            graph (KnowledgeGraph): training triples; the table covers its whole vocabulary
            config (TrainConfig): model kind, dimension and optimisation knobs
            progress (bool, optional): show a tqdm bar over epochs
        """
        self.graph = graph
        self.config = config
        self.progress = progress
        self.history: list[EpochLog] = []

    def init_table(self) -> EmbeddingTable:
        cfg = self.config
        table = init_params(
            cfg.kind,
            cfg.dim,
            self.graph.num_entities,
            self.graph.num_relations,
            cfg.seed,
            entity_ids=tuple(self.graph.entities.ids()),
            relation_ids=tuple(self.graph.relations.ids()),
        )
        table.meta = {"train": self.config.model_dump(mode="json")}
        return table

    def step(self, table: EmbeddingTable, batch: np.ndarray, rng: np.random.Generator) -> float:
        """One SGD update on a (B, 3) batch; returns the summed batch loss."""
        cfg = self.config
        negatives = corrupt_batch(
            batch, cfg.negatives_per_positive, cfg.corruption, table.num_entities, rng
        )
        candidates = np.concatenate([batch[:, None, :], negatives], axis=1)
        heads, rels, tails = candidates[..., 0], candidates[..., 1], candidates[..., 2]
        h, r, t = table.entities[heads], table.relations[rels], table.entities[tails]

        batch_scores = scores(cfg.kind, h, r, t)
        if not np.isfinite(batch_scores).all():
            return float("nan")
        loss, d_scores = softmax_nll(batch_scores)

        grad_h, grad_r, grad_t = gradients(cfg.kind, h, r, t)
        coef = -cfg.learning_rate * d_scores[..., None]
        dim = table.dim
        # np.add.at accumulates repeated rows in index order
        np.add.at(table.entities, heads.ravel(), (coef * grad_h).reshape(-1, dim))
        np.add.at(table.relations, rels.ravel(), (coef * grad_r).reshape(-1, dim))
        np.add.at(table.entities, tails.ravel(), (coef * grad_t).reshape(-1, dim))
        return float(loss.sum())

    def run(self) -> EmbeddingTable:
        cfg = self.config
        triples = self.graph.triple_array
        if len(triples) == 0:
            raise DataError("cannot train on an empty graph")

        table = self.init_table()
        rng = np.random.default_rng((cfg.seed, 1))
        self.history = []
        logger.info(
            "training %s (d=%d) on %d triples for %d epochs",
            cfg.kind.value,
            cfg.dim,
            len(triples),
            cfg.epochs,
        )

        epochs = tqdm(
            range(1, cfg.epochs + 1),
            desc=f"train {cfg.kind.value}",
            disable=not self.progress or progress_disabled(),
        )
        for epoch in epochs:
            started = time.perf_counter()
            order = rng.permutation(len(triples))
            total = 0.0
            for b, start in enumerate(range(0, len(triples), cfg.batch_size)):
                batch = triples[order[start : start + cfg.batch_size]]
                batch_loss = self.step(table, batch, rng)
                if not np.isfinite(batch_loss) or not table.is_finite():
                    raise TrainingDivergedError(epoch, b, batch_loss)
                total += batch_loss
            if cfg.unit_norm_entities:
                norms = np.linalg.norm(table.entities, axis=1, keepdims=True)
                np.divide(table.entities, norms, out=table.entities, where=norms > 0)
            mean_loss = total / len(triples)
            self.history.append(EpochLog(epoch, mean_loss, time.perf_counter() - started))
            epochs.set_postfix(loss=f"{mean_loss:.4f}")

        if self.history:
            logger.info("%s final mean loss %.6f", cfg.kind.value, self.history[-1].mean_loss)
        return table

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(log.epoch, log.mean_loss, log.wall_time) for log in self.history],
            columns=["epoch", "mean_loss", "wall_time"],
        )

    def write_history(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.history_frame().to_csv(path, index=False, float_format="%.6g")
        return path


def train(graph: KnowledgeGraph, config: TrainConfig) -> EmbeddingTable:
    return Trainer(graph, config).run()


def train_test_split(
    graph: KnowledgeGraph, fraction: float, cap: int, seed: int
) -> tuple[KnowledgeGraph, list[Triple]]:
    """Hold out min(cap, fraction * |triples|) triples; the training graph keeps the
    full vocabulary so every entity still gets an embedding row.
    """
    n = graph.num_triples
    size = min(cap, int(round(fraction * n)))
    if fraction > 0 and n > 1:
        size = max(size, 1)
    size = min(size, n - 1) if n > 1 else 0
    rng = np.random.default_rng(seed)
    held = set(rng.choice(n, size=size, replace=False).tolist()) if size else set()
    kept = [t for i, t in enumerate(graph.triples) if i not in held]
    held_out = [t for i, t in enumerate(graph.triples) if i in held]
    logger.info("held out %d of %d triples for evaluation", len(held_out), n)
    return KnowledgeGraph(graph.entities, graph.relations, kept, graph.labels), held_out
