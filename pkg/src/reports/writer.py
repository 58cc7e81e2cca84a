import json
from collections.abc import Iterable, Mapping
from pathlib import Path

import numpy as np
import pandas as pd

from analytics.comparison import SimilarityMatrix
from bias.metrics import BiasScoreTable, ThresholdCurve, rank_occupations
from exceptions import ReportWriteError
from kg.store import KnowledgeGraph, label_of
from utils import round_sig

FLOAT_FORMAT = "%.6g"
FORMATS = ("csv", "json")


def _plain(value):
    """JSON-ready value with floats cut to 6 significant digits."""
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return round_sig(float(value))
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(obj, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise ReportWriteError(f"cannot write {path}: {e}") from e
    return path


def emit_report(
    frame: pd.DataFrame,
    stem: str | Path,
    formats: Iterable[str] = FORMATS,
    index: bool = False,
) -> list[Path]:
    """Write one table as <stem>.csv and/or <stem>.json with 6 significant digits

    Args:
        frame (pd.DataFrame): the table; column order is the file schema
        stem (str | Path): output path without suffix
        formats (Iterable[str], optional): any of "csv", "json"
        index (bool, optional): write the index as first column / "index" key

    Returns:
        list[Path]: files written
    """
    stem = Path(stem)
    written = []
    try:
        stem.parent.mkdir(parents=True, exist_ok=True)
        for fmt in formats:
            if fmt == "csv":
                path = stem.with_suffix(".csv")
                frame.to_csv(path, index=index, float_format=FLOAT_FORMAT, lineterminator="\n")
            elif fmt == "json":
                path = stem.with_suffix(".json")
                if index:
                    payload = frame.to_dict(orient="split")
                else:
                    payload = {"columns": list(frame.columns), "rows": frame.to_dict(orient="records")}
                write_json(payload, path)
            else:
                raise ValueError(f"unknown report format '{fmt}'")
            written.append(path)
    except OSError as e:
        raise ReportWriteError(f"cannot write report {stem}: {e}") from e
    return written


def scores_frame(table: BiasScoreTable, graph: KnowledgeGraph) -> pd.DataFrame:
    ranked = rank_occupations(table)
    rows = [
        {
            "occupation": graph.entity_id(o),
            "label": label_of(graph, o),
            "score": score,
            "rank": rank,
        }
        for rank, (o, score) in enumerate(ranked, start=1)
    ]
    return pd.DataFrame(rows, columns=["occupation", "label", "score", "rank"])


def curve_frame(curve: ThresholdCurve) -> pd.DataFrame:
    return pd.DataFrame({"t": curve.grid, "neutral_count": curve.neutral_counts})


def matrix_frame(matrix: SimilarityMatrix) -> pd.DataFrame:
    frame = matrix.to_frame()
    frame.index.name = "demography"
    return frame


def frequency_frame(counts: Mapping[int, int], graph: KnowledgeGraph) -> pd.DataFrame:
    rows = [
        {"occupation": graph.entity_id(o), "label": label_of(graph, o), "count": c}
        for o, c in sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    ]
    return pd.DataFrame(rows, columns=["occupation", "label", "count"])
