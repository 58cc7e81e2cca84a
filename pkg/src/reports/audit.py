from collections.abc import Iterator
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from enum import Enum
from importlib import metadata
from itertools import product
from pathlib import Path

import pandas as pd
from tqdm import tqdm

from analytics.comparison import (
    SimilarityMatrix,
    algorithm_overlap,
    cross_demography_matrix,
    effective_k,
    missing_ranks,
    most_similar_pairs,
    rank_deviation,
    top_similar,
)
from analytics.diversity import frequency_counts, occupation_entropy, unique_occupations
from bias.embedding import embedding_bias_scores
from bias.metrics import (
    BiasScoreTable,
    Direction,
    RankedList,
    ThresholdCurve,
    classify_occupations,
    data_bias_scores,
    rank_occupations,
    ranked_by_data_bias,
    select_threshold,
)
from evaluation.link_prediction import EvalReport, evaluate
from exceptions import AuditError, DataError, NumericFault, ReportWriteError, StageFailed
from kg.slicer import DemographySlice, merge_slices, slice_demography, slice_statistics
from kg.store import IngestReport, KnowledgeGraph, Triple, label_of, read_labels, read_triples, write_ingest_report
from models.models import EmbeddingTable, ModelKind, load_table, save_table
from reports.writer import (
    curve_frame,
    emit_report,
    frequency_frame,
    matrix_frame,
    scores_frame,
    write_json,
)
from settings import AuditConfig
from training.trainer import Trainer, train_test_split
from utils import derive_seed, get_logger, progress_disabled

logger = get_logger(__name__)

DIRECTIONS = (Direction.MALE, Direction.FEMALE)
VERSION_PACKAGES = ("kg-bias-audit", "numpy", "pandas", "scipy", "scikit-learn", "pydantic")


class Stage(Enum):
    INGEST = "ingest"
    SLICE = "slice"
    MERGE = "merge"
    TRAIN = "train"
    EVAL = "eval"
    DATA_BIAS = "data-bias"
    EMBED_BIAS = "embed-bias"
    COMPARE = "compare"
    REPORT = "report"


def _versions() -> dict[str, str]:
    versions = {}
    for name in VERSION_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def combination(kind: ModelKind, direction: Direction) -> str:
    return f"{kind.value}-{direction.value}"


class AuditRun:
    """Runs the audit stage by stage, writing every artifact under the output directory.

    Each stage pulls in the stages it depends on, so a subcommand can stop at
    any point. Trained tables already present in the output directory are
    reused when they were produced by the same training config on the same graph.
    """

    def __init__(self, config: AuditConfig, progress: bool = True):
        self.config = config
        self.out = Path(config.output_dir)
        self.progress = progress and not progress_disabled()
        self.artifacts: dict[str, str] = {}
        # artifacts holding wall-clock values, excluded from rerun comparisons
        self.timing_artifacts: set[str] = set()
        self.completed: list[str] = []
        self.seeds: dict[str, int] = {}

        self.graph: KnowledgeGraph | None = None
        self.ingest_report: IngestReport | None = None
        self.slices: list[DemographySlice] | None = None
        self.giant: KnowledgeGraph | None = None
        self.train_graph: KnowledgeGraph | None = None
        self.held_out: list[Triple] = []
        self.tables: dict[ModelKind, EmbeddingTable] = {}
        self.evals: dict[ModelKind, EvalReport] = {}
        self.data_bias: dict[str, BiasScoreTable] = {}
        self.curves: dict[str, ThresholdCurve] = {}
        self.embed_bias: dict[tuple[str, ModelKind, Direction], BiasScoreTable] = {}

    # bookkeeping

    def seed(self, stage: str) -> int:
        value = self.seeds.get(stage)
        if value is None:
            value = self.seeds[stage] = derive_seed(self.config.seed, stage)
        return value

    def _record(self, paths: list[Path] | Path, timing: bool = False) -> None:
        for path in paths if isinstance(paths, list) else [paths]:
            rel = path.relative_to(self.out).as_posix()
            self.artifacts[rel] = rel
            if timing:
                self.timing_artifacts.add(rel)

    @contextmanager
    def stage(self, stage: Stage) -> Iterator[None]:
        logger.info("stage %s started", stage.value)
        try:
            yield
        except AuditError as e:
            logger.error("stage %s failed: %s", stage.value, e)
            self.write_manifest(failed=stage.value, error=str(e))
            raise StageFailed(stage.value, e) from e
        except OSError as e:
            logger.error("stage %s failed: %s", stage.value, e)
            self.write_manifest(failed=stage.value, error=str(e))
            raise StageFailed(stage.value, ReportWriteError(str(e))) from e
        except Exception as e:
            # library errors (numpy, pandas, sklearn) still end the run with a manifest
            logger.exception("stage %s failed unexpectedly", stage.value)
            error = f"{type(e).__name__}: {e}"
            cause = NumericFault(error) if isinstance(e, ArithmeticError) else DataError(error)
            self.write_manifest(failed=stage.value, error=error)
            raise StageFailed(stage.value, cause) from e
        self.completed.append(stage.value)
        logger.info("stage %s done", stage.value)

    def manifest(self, failed: str | None = None, error: str | None = None) -> dict:
        manifest = {
            "artifacts": sorted(self.artifacts),
            "timing_artifacts": sorted(self.timing_artifacts),
            "completed_stages": list(self.completed),
            "config": self.config.model_dump(mode="json"),
            "seeds": dict(sorted(self.seeds.items())),
            "versions": _versions(),
        }
        if failed:
            manifest["failed_stage"] = failed
            manifest["error"] = error
        return manifest

    def write_manifest(self, failed: str | None = None, error: str | None = None) -> dict:
        manifest = self.manifest(failed, error)
        try:
            write_json(manifest, self.out / "manifest.json")
        except ReportWriteError:
            logger.exception("could not write the manifest")
        return manifest

    def _label(self, occupation: int) -> str:
        return label_of(self.graph, occupation)

    # stages

    def ingest(self) -> None:
        with self.stage(Stage.INGEST):
            self.config.check_paths()
            corpus = self.config.corpus
            graph, report = read_triples(corpus.triples, corpus.triple_format())
            if corpus.labels is not None:
                graph = graph.with_labels(read_labels(corpus.labels))
            self.graph, self.ingest_report = graph, report
            self._record(write_ingest_report(report, self.out / "ingest" / "ingest_report.json"))

    def slice(self) -> None:
        if self.graph is None:
            self.ingest()
        with self.stage(Stage.SLICE):
            self.slices = [slice_demography(self.graph, spec) for spec in self.config.slice_specs()]

    def merge(self) -> None:
        if self.slices is None:
            self.slice()
        with self.stage(Stage.MERGE):
            self.giant = merge_slices(self.graph, self.slices)
            self._record(
                emit_report(slice_statistics(self.giant, self.slices), self.out / "slices" / "statistics")
            )
            self.train_graph, self.held_out = train_test_split(
                self.giant,
                self.config.eval.test_fraction,
                self.config.eval.test_size,
                self.seed("split"),
            )

    def _cached_table(self, path: Path, trainer: Trainer) -> EmbeddingTable | None:
        if not path.with_suffix(".json").is_file():
            return None
        try:
            table = load_table(path)
        except AuditError:
            return None
        if table.meta.get("train") != trainer.config.model_dump(mode="json") or table.entity_ids != tuple(
            self.train_graph.entities.ids()
        ):
            return None
        logger.info("reusing trained table %s", path.with_suffix(".bin"))
        return table

    def train(self) -> None:
        if self.train_graph is None:
            self.merge()
        with self.stage(Stage.TRAIN):
            for kind in self.config.models:
                train_config = self.config.train.for_model(kind, self.seed(f"train:{kind.value}"))
                trainer = Trainer(self.train_graph, train_config, progress=self.progress)
                stem = self.out / "models" / kind.value
                table = self._cached_table(stem, trainer)
                if table is None:
                    table = trainer.run()
                    self._record(list(save_table(table, stem)))
                    self._record(
                        trainer.write_history(self.out / "models" / f"{kind.value}_loss.csv"),
                        timing=True,
                    )
                else:
                    self._record([stem.with_suffix(".bin"), stem.with_suffix(".json")])
                self.tables[kind] = table

    def evaluate(self) -> None:
        if len(self.tables) < len(self.config.models):
            self.train()
        with self.stage(Stage.EVAL):
            rows = []
            for kind in self.config.models:
                eval_config = self.config.eval.model_copy(update={"seed": self.seed(f"eval:{kind.value}")})
                report = evaluate(self.tables[kind], self.train_graph, self.held_out, eval_config)
                self.evals[kind] = report
                rows.append(report.to_row(kind.value))
                self._record(write_json(report.to_dict(), self.out / "eval" / f"{kind.value}.json"))
            frame = pd.DataFrame(rows, columns=["method", "MRR", "Hits@5", "Hits@10", "Hits@20"])
            self._record(emit_report(frame, self.out / "eval" / "link_prediction"))

    def compute_data_bias(self) -> None:
        if self.slices is None:
            self.slice()
        with self.stage(Stage.DATA_BIAS):
            bias = self.config.bias
            for demography in self.slices:
                table = data_bias_scores(demography)
                curve = select_threshold(table, bias.grid, bias.grid_steps)
                male, female, neutral = classify_occupations(table, curve.selected)
                self.data_bias[demography.name] = table
                self.curves[demography.name] = curve

                base = self.out / "data_bias" / demography.name
                self._record(emit_report(scores_frame(table, self.graph), f"{base}_scores"))
                self._record(emit_report(curve_frame(curve), f"{base}_threshold", formats=("csv",)))
                classes = {
                    "threshold": curve.selected,
                    "degenerate_curve": curve.degenerate,
                    **{
                        name: sorted(self.graph.entity_id(o) for o in group)
                        for name, group in (("male", male), ("female", female), ("neutral", neutral))
                    },
                }
                self._record(write_json(classes, f"{base}_classes.json"))

    def compute_embed_bias(self) -> None:
        if len(self.tables) < len(self.config.models):
            self.train()
        with self.stage(Stage.EMBED_BIAS):
            bias = self.config.bias
            jobs = list(product(self.slices, self.config.models, DIRECTIONS))

            def run(job):
                demography, kind, direction = job
                return embedding_bias_scores(self.tables[kind], demography, direction, bias.alpha, bias.steps)

            # map() keeps job order, so results are assembled identically for any thread count
            with ThreadPoolExecutor(max_workers=self.config.threads) as pool:
                results = list(
                    tqdm(
                        pool.map(run, jobs),
                        total=len(jobs),
                        desc="embedding bias",
                        disable=not self.progress,
                    )
                )
            for (demography, kind, direction), table in zip(jobs, results):
                self.embed_bias[(demography.name, kind, direction)] = table
                stem = self.out / "embed_bias" / f"{demography.name}_{combination(kind, direction)}"
                self._record(emit_report(scores_frame(table, self.graph), stem))

    def ranked(self, kind: ModelKind, direction: Direction) -> dict[str, RankedList]:
        return {
            demography.name: rank_occupations(self.embed_bias[(demography.name, kind, direction)])
            for demography in self.slices
        }

    def compare(self) -> None:
        if not self.data_bias:
            self.compute_data_bias()
        if not self.embed_bias:
            self.compute_embed_bias()
        with self.stage(Stage.COMPARE):
            self._rank_deviation_table()
            self._algorithm_tables()
            if len(self.slices) >= 2:
                self._demography_tables()
            else:
                logger.warning("one demography only: cross-demography tables skipped")
            self._diversity_tables()

    def _rank_deviation_table(self) -> None:
        k = self.config.rank_deviation_k
        rows = []
        for demography in self.slices:
            row = {"demography": demography.name}
            for kind, direction in product(self.config.models, DIRECTIONS):
                data_list = ranked_by_data_bias(self.data_bias[demography.name], direction)
                embed_list = rank_occupations(self.embed_bias[(demography.name, kind, direction)])
                row[combination(kind, direction)] = rank_deviation(data_list, embed_list, k)
                row[f"{combination(kind, direction)}-missing"] = missing_ranks(data_list, embed_list, k)
            rows.append(row)
        self._record(emit_report(pd.DataFrame(rows), self.out / "compare" / f"rank_deviation_k{k}"))

    def _algorithm_tables(self) -> None:
        models = self.config.models
        if len(models) < 2:
            return
        pairs = {}
        for demography in self.slices:
            for direction in DIRECTIONS:
                lists = {
                    kind.value: rank_occupations(self.embed_bias[(demography.name, kind, direction)])
                    for kind in models
                }
                for (a, b, k), value in algorithm_overlap(lists, self.config.k_values).items():
                    row = pairs.setdefault((a, b), {}).setdefault(demography.name, {"demography": demography.name})
                    row[f"{direction.value}@{k}"] = value
                    row[f"{direction.value}@{k}-effective_k"] = effective_k(lists[a], lists[b], k)
        for (a, b), rows in pairs.items():
            frame = pd.DataFrame(list(rows.values()))
            self._record(emit_report(frame, self.out / "compare" / f"algorithm_jaccard_{a}_vs_{b}"))

    def _demography_tables(self) -> None:
        n_top = min(self.config.bias.top_similar, len(self.slices) - 1)
        for k in self.config.k_values:
            summary = {d.name: {"demography": d.name} for d in self.slices}
            similar_rows, pair_rows = [], []
            for kind, direction in product(self.config.models, DIRECTIONS):
                name = combination(kind, direction)
                matrix: SimilarityMatrix = cross_demography_matrix(self.ranked(kind, direction), k)
                self._record(
                    emit_report(
                        matrix_frame(matrix),
                        self.out / "compare" / f"similarity_{name}_k{k}",
                        index=True,
                    )
                )
                for i, demography in enumerate(matrix.names):
                    summary[demography][f"{name}-mean"] = matrix.row_mean[i]
                    summary[demography][f"{name}-std"] = matrix.row_std[i]
                    similar_rows.append(
                        {
                            "demography": demography,
                            "combination": name,
                            "most_similar": ";".join(top_similar(matrix, demography, n_top)),
                        }
                    )
                for a, b, value in most_similar_pairs(matrix, 1):
                    pair_rows.append({"combination": name, "demography_a": a, "demography_b": b, "similarity": value})

            self._record(
                emit_report(pd.DataFrame(list(summary.values())), self.out / "compare" / f"demography_similarity_k{k}")
            )
            self._record(emit_report(pd.DataFrame(similar_rows), self.out / "compare" / f"top_similar_k{k}"))
            self._record(emit_report(pd.DataFrame(pair_rows), self.out / "compare" / f"most_similar_pairs_k{k}"))

    def _diversity_tables(self) -> None:
        k = self.config.bias.entropy_k
        entropy_rows = []
        for kind, direction in product(self.config.models, DIRECTIONS):
            name = combination(kind, direction)
            lists = self.ranked(kind, direction)
            report = occupation_entropy(lists, k, direction, kind.value)
            entropy_rows.append(report.to_dict())
            self._record(
                emit_report(
                    frequency_frame(frequency_counts(lists, k), self.graph),
                    self.out / "compare" / f"frequency_{name}",
                    formats=("csv",),
                )
            )
            unique_rows = [
                {"demography": demography, "occupation": self.graph.entity_id(o), "label": self._label(o)}
                for demography, occupations in unique_occupations(lists, k).items()
                for o in occupations
            ]
            self._record(
                emit_report(
                    pd.DataFrame(unique_rows, columns=["demography", "occupation", "label"]),
                    self.out / "compare" / f"unique_{name}",
                    formats=("csv",),
                )
            )
        frame = pd.DataFrame(
            entropy_rows,
            columns=["model", "direction", "k", "demographies", "vocabulary_size", "entropy"],
        )
        self._record(emit_report(frame, self.out / "compare" / "entropy"))

    def run(self, until: Stage = Stage.REPORT) -> dict:
        steps = {
            Stage.INGEST: self.ingest,
            Stage.SLICE: self.slice,
            Stage.MERGE: self.merge,
            Stage.TRAIN: self.train,
            Stage.EVAL: self.evaluate,
            Stage.DATA_BIAS: self.compute_data_bias,
            Stage.EMBED_BIAS: self.compute_embed_bias,
            Stage.COMPARE: self.compare,
        }
        if until is Stage.REPORT:
            self.evaluate()
            self.compare()
            self.completed.append(Stage.REPORT.value)
        else:
            steps[until]()
        return self.write_manifest()


def run_audit(config: AuditConfig, until: Stage = Stage.REPORT, progress: bool = True) -> dict:
    """Full pipeline (or up to `until`); returns the manifest written to the output dir."""
    return AuditRun(config, progress=progress).run(until)
