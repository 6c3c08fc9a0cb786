"""Text formats for metrics reports and extracted-feature stores.

Metrics report: UTF-8 text holding a ``classes`` line, the confusion
matrix inside a ``` fence (11 rows of 11 integers, row = true class), and
``metric,value`` lines.  Feature store: one record per line, the sample id
followed by comma-separated reals with 9 significant digits.

Both formats contain no timestamps so identical runs produce identical
bytes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fsio import atomic_write_text
from .metrics import ConfusionMatrix, MetricsReport

_FENCE = "```"


@dataclass
class ReportDoc:
    class_names: tuple[str, ...]
    matrix: ConfusionMatrix
    metrics: dict[str, float]
    zero_row_classes: tuple[str, ...]
    zero_col_classes: tuple[str, ...]


def render_report(class_names, matrix: ConfusionMatrix,
                  report: MetricsReport) -> str:
    class_names = tuple(class_names)
    if len(class_names) != matrix.num_classes:
        raise ValueError(
            f"{len(class_names)} class names for a "
            f"{matrix.num_classes}-class matrix")
    lines = ["classes," + ",".join(class_names), _FENCE]
    for row in matrix.counts:
        lines.append(" ".join(str(int(v)) for v in row))
    lines.append(_FENCE)
    lines.append(f"samples,{matrix.total}")
    lines.append(f"accuracy,{report.accuracy!r}")
    lines.append(f"macro_precision,{report.macro_precision!r}")
    lines.append(f"macro_recall,{report.macro_recall!r}")
    lines.append(f"macro_f_score,{report.macro_f_score!r}")
    for name, values in (("precision", report.per_class_precision),
                         ("recall", report.per_class_recall),
                         ("f_score", report.per_class_f_score)):
        for cls, value in zip(class_names, values):
            lines.append(f"{name}_{cls},{value!r}")
    flag = ";".join(class_names[i] for i in report.zero_row_classes)
    lines.append(f"zero_row_classes,{flag}")
    flag = ";".join(class_names[i] for i in report.zero_col_classes)
    lines.append(f"zero_col_classes,{flag}")
    return "\n".join(lines) + "\n"


def write_report(path, class_names, matrix: ConfusionMatrix,
                 report: MetricsReport) -> None:
    atomic_write_text(path, render_report(class_names, matrix, report))


def parse_report(text: str) -> ReportDoc:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("classes,"):
        raise ValueError("report must start with a classes line")
    class_names = tuple(lines[0].split(",")[1:])
    try:
        open_at = lines.index(_FENCE)
        close_at = lines.index(_FENCE, open_at + 1)
    except ValueError:
        raise ValueError("report is missing the fenced confusion matrix")
    rows = [[int(v) for v in line.split()]
            for line in lines[open_at + 1:close_at]]
    matrix = ConfusionMatrix(np.array(rows, dtype=np.int64))
    metrics: dict[str, float] = {}
    zero_rows: tuple[str, ...] = ()
    zero_cols: tuple[str, ...] = ()
    for line in lines[close_at + 1:]:
        if not line.strip():
            continue
        key, _, value = line.partition(",")
        if key == "zero_row_classes":
            zero_rows = tuple(v for v in value.split(";") if v)
        elif key == "zero_col_classes":
            zero_cols = tuple(v for v in value.split(";") if v)
        elif key == "samples":
            if int(value) != matrix.total:
                raise ValueError(
                    f"sample count {value} disagrees with matrix total "
                    f"{matrix.total}")
        else:
            metrics[key] = float(value)
    return ReportDoc(class_names, matrix, metrics, zero_rows, zero_cols)


def read_report(path) -> ReportDoc:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_report(fh.read())


def render_features(sample_ids, features: np.ndarray) -> str:
    features = np.asarray(features)
    sample_ids = list(sample_ids)
    if features.ndim != 2 or len(sample_ids) != len(features):
        raise ValueError(
            f"need one sample id per feature row, got {len(sample_ids)} ids "
            f"for shape {features.shape}")
    lines = []
    for sid, row in zip(sample_ids, features):
        if "," in sid or "\n" in sid:
            raise ValueError(f"sample id {sid!r} contains a reserved character")
        lines.append(sid + "," + ",".join(f"{v:.9g}" for v in row))
    return "\n".join(lines) + "\n"


def write_features(path, sample_ids, features: np.ndarray) -> None:
    atomic_write_text(path, render_features(sample_ids, features))


def read_features(path):
    """Returns ``(sample_ids, float32 matrix)``."""
    ids = []
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            sid, _, rest = line.partition(",")
            try:
                row = np.array([float(v) for v in rest.split(",")],
                               dtype=np.float32)
            except ValueError:
                raise ValueError(f"{path}:{ln}: malformed feature record")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ValueError(
                    f"{path}:{ln}: record has {len(row)} values, expected "
                    f"{width}")
            ids.append(sid)
            rows.append(row)
    if not rows:
        raise ValueError(f"feature store {path} is empty")
    return ids, np.stack(rows)
