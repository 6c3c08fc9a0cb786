"""Report and feature-store text formats: render, parse, roundtrip."""

import numpy as np
import pytest

from scriptfuse.data import CANONICAL_SCRIPTS
from scriptfuse.metrics import ConfusionMatrix, metrics_from_matrix
from scriptfuse.reports import (
    parse_report,
    read_features,
    read_report,
    render_features,
    render_report,
    write_features,
    write_report,
)


def _sample_matrix():
    counts = np.diag([10] * 11)
    counts[0, 0] = 8
    counts[0, 1] = 2
    return ConfusionMatrix(counts)


def _render():
    matrix = _sample_matrix()
    return matrix, render_report(CANONICAL_SCRIPTS, matrix,
                                 metrics_from_matrix(matrix))


def test_report_layout():
    matrix, text = _render()
    lines = text.splitlines()
    assert lines[0] == "classes," + ",".join(CANONICAL_SCRIPTS)
    assert lines[1] == "```" and lines[13] == "```"
    body = lines[2:13]
    assert len(body) == 11
    parsed = np.array([[int(v) for v in row.split()] for row in body])
    assert np.array_equal(parsed, matrix.counts)
    assert lines[14] == "samples,110"
    assert text.endswith("\n")


def test_report_metric_lines_use_full_precision():
    _, text = _render()
    by_key = dict(line.split(",", 1) for line in text.splitlines()
                  if "," in line and not line.startswith("classes"))
    assert float(by_key["accuracy"]) == 108 / 110
    # repr round-trips the exact double
    assert by_key["accuracy"] == repr(108 / 110)
    assert float(by_key["macro_f_score"]) == (8 / 9 + 10 / 11 + 9.0) / 11.0
    first = CANONICAL_SCRIPTS[0]
    second = CANONICAL_SCRIPTS[1]
    assert float(by_key[f"recall_{first}"]) == 0.8
    assert float(by_key[f"precision_{second}"]) == 10 / 12
    assert float(by_key[f"f_score_{second}"]) == 10 / 11
    assert by_key["zero_row_classes"] == ""
    assert by_key["zero_col_classes"] == ""


def test_report_has_no_timestamp_and_is_stable():
    _, first = _render()
    _, second = _render()
    assert first == second


def test_report_roundtrip(tmp_path):
    matrix = _sample_matrix()
    report = metrics_from_matrix(matrix)
    path = tmp_path / "report.txt"
    write_report(path, CANONICAL_SCRIPTS, matrix, report)
    doc = read_report(path)
    assert doc.class_names == CANONICAL_SCRIPTS
    assert np.array_equal(doc.matrix.counts, matrix.counts)
    assert doc.metrics["accuracy"] == report.accuracy
    assert doc.metrics["macro_precision"] == report.macro_precision
    assert doc.metrics[f"f_score_{CANONICAL_SCRIPTS[1]}"] == 10 / 11
    assert doc.zero_row_classes == () and doc.zero_col_classes == ()


def test_report_zero_classes_named(tmp_path):
    counts = np.diag([5] * 11)
    counts[3, 3] = 0
    counts[0, 3] = 1  # class 3 predicted but never true
    matrix = ConfusionMatrix(counts)
    text = render_report(CANONICAL_SCRIPTS, matrix, metrics_from_matrix(matrix))
    doc = parse_report(text)
    assert doc.zero_row_classes == (CANONICAL_SCRIPTS[3],)
    assert doc.zero_col_classes == ()


def test_report_name_count_must_match():
    matrix = _sample_matrix()
    with pytest.raises(ValueError, match="class names"):
        render_report(CANONICAL_SCRIPTS[:5], matrix, metrics_from_matrix(matrix))


def test_parse_report_rejects_malformed():
    with pytest.raises(ValueError, match="classes line"):
        parse_report("accuracy,1.0\n")
    with pytest.raises(ValueError, match="fenced"):
        parse_report("classes,a,b\naccuracy,1.0\n")
    _, text = _render()
    tampered = text.replace("samples,110", "samples,109")
    with pytest.raises(ValueError, match="disagrees"):
        parse_report(tampered)


def test_feature_store_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    feats = rng.random((4, 6), dtype=np.float32) * 10.0
    ids = ["train/a.png", "train/b.png", "c", "d"]
    path = tmp_path / "feats.csv"
    write_features(path, ids, feats)
    got_ids, got = read_features(path)
    assert got_ids == ids
    assert got.shape == feats.shape
    # 9 significant digits cover every float32 exactly
    assert np.array_equal(got, feats)


def test_feature_store_text_shape():
    text = render_features(["x"], np.array([[0.5, 1.0, 2.25]]))
    assert text == "x,0.5,1,2.25\n"


def test_feature_store_rejects_reserved_ids():
    with pytest.raises(ValueError, match="reserved"):
        render_features(["a,b"], np.zeros((1, 2)))
    with pytest.raises(ValueError, match="one sample id per"):
        render_features(["a", "b"], np.zeros((1, 2)))
    with pytest.raises(ValueError, match="one sample id per"):
        render_features(["a"], np.zeros(3))


def test_read_features_validates_records(tmp_path):
    path = tmp_path / "feats.csv"
    path.write_text("a,1.0,2.0\nb,3.0\n")
    with pytest.raises(ValueError, match="expected 2"):
        read_features(path)
    path.write_text("a,1.0,zap\n")
    with pytest.raises(ValueError, match="malformed feature record"):
        read_features(path)
    path.write_text("")
    with pytest.raises(ValueError, match="empty"):
        read_features(path)
