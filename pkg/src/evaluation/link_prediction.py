from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from exceptions import EvalError
from kg.store import KnowledgeGraph, Triple
from models.models import EmbeddingTable, score_triples
from training.sampling import CorruptionPolicy, corrupt_batch
from utils import get_logger

logger = get_logger(__name__)

HITS_AT = (5, 10, 20)


class EvalConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    negatives: int = Field(default=50, gt=0)
    trials: int = Field(default=3, gt=0)
    test_size: int = Field(default=10_000, gt=0)
    # share of the giant graph held out from training for evaluation
    test_fraction: float = Field(default=0.1, ge=0, lt=1)
    corruption: CorruptionPolicy = CorruptionPolicy.BOTH
    seed: int = 0


@dataclass
class EvalReport:
    mrr: float
    hits: dict[int, float]
    trials: int
    per_trial: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mrr": self.mrr,
            "hits": {str(n): v for n, v in sorted(self.hits.items())},
            "trials": self.trials,
            "per_trial": self.per_trial,
        }

    def to_row(self, method: str) -> dict:
        row = {"method": method, "MRR": self.mrr}
        row.update({f"Hits@{n}": v for n, v in sorted(self.hits.items())})
        return row


def ranks_from_scores(positive: np.ndarray, negative: np.ndarray) -> np.ndarray:
    """1 + number of negatives scoring at least as high as the positive.

    Ties count against the positive, so constant embeddings cannot reach rank 1.
    """
    return 1 + (negative >= positive[..., None]).sum(axis=-1)


def rank_against_negatives(
    table: EmbeddingTable, triple: Triple, negatives: Sequence[Triple]
) -> int:
    if len(negatives) == 0:
        raise EvalError("ranking needs at least one negative")
    positive = score_triples(table, np.asarray([triple]))
    negative = score_triples(table, np.asarray(negatives))[None, :]
    return int(ranks_from_scores(positive, negative)[0])


def summarize_ranks(ranks: np.ndarray, hits_at: Sequence[int] = HITS_AT) -> dict:
    reciprocal = 1.0 / ranks.astype(np.float64)
    return {
        "mrr": float(reciprocal.mean()),
        "hits": {n: float((ranks <= n).mean()) for n in hits_at},
        "size": int(len(ranks)),
    }


def evaluate(
    table: EmbeddingTable,
    graph: KnowledgeGraph,
    held_out: Sequence[Triple],
    config: EvalConfig | None = None,
) -> EvalReport:
    """MRR and Hits@n of held-out triples ranked against sampled corruptions

    Args:
        table (EmbeddingTable): trained embeddings over the graph's vocabulary
        graph (KnowledgeGraph): graph whose entities the corruptions are drawn from
        held_out (Sequence[Triple]): triples not seen during training
        config (EvalConfig, optional): negatives, trials, test size and seed

    Returns:
        EvalReport: values averaged over the trials, plus each trial's values
    """
    config = config or EvalConfig()
    if len(held_out) == 0:
        raise EvalError("empty test set")
    triples = np.asarray(held_out, dtype=np.int64)
    rng = np.random.default_rng(config.seed)
    size = min(config.test_size, len(triples))

    per_trial = []
    for _ in range(config.trials):
        sample = triples[rng.choice(len(triples), size=size, replace=False)]
        negatives = corrupt_batch(
            sample, config.negatives, config.corruption, graph.num_entities, rng
        )
        ranks = ranks_from_scores(score_triples(table, sample), score_triples(table, negatives))
        per_trial.append(summarize_ranks(ranks))

    report = EvalReport(
        mrr=float(np.mean([t["mrr"] for t in per_trial])),
        hits={n: float(np.mean([t["hits"][n] for t in per_trial])) for n in HITS_AT},
        trials=config.trials,
        per_trial=[
            {"mrr": t["mrr"], "hits": {str(n): v for n, v in t["hits"].items()}, "size": t["size"]}
            for t in per_trial
        ],
    )
    logger.info(
        "%s: MRR %.4f, Hits@5 %.4f, Hits@10 %.4f, Hits@20 %.4f over %d trials of %d triples",
        table.kind.value,
        report.mrr,
        report.hits[5],
        report.hits[10],
        report.hits[20],
        config.trials,
        size,
    )
    return report
