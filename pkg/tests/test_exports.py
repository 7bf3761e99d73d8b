"""Tests for core/exports.py — features binárias, JSON, relatórios e parâmetros."""

from __future__ import annotations

import csv
import json
import struct
import sys

import numpy as np
import pytest

from core.assignment import GroundTruthInstance
from core.errors import DataError, FormatError
from core.evaluation import EvalConfig, Segment, mean_ap
from core.exports import (
    Annotation,
    export_csv,
    export_xlsx,
    load_parameters,
    map_table_rows,
    read_annotation,
    read_features,
    read_predictions,
    read_train_log,
    save_parameters,
    write_annotation,
    write_features,
    write_map_json,
    write_predictions,
    write_sensitivity_csv,
    write_train_log,
)
from core.inference import Detection
from core.sensitivity import SensitivityParams, export_sensitivity_curves

G = GroundTruthInstance


# ── Fixtures ─────────────────────────────────────────────────────────────


@pytest.fixture
def sample_rows():
    return [
        {"threshold": "0.5", "mAP": "0.8333"},
        {"threshold": "average", "mAP": "0.8333"},
    ]


@pytest.fixture
def sample_headers():
    return ["threshold", "mAP"]


@pytest.fixture
def features_file(tmp_path, rng):
    arr = rng.normal(size=(6, 3)).astype(np.float32)
    return write_features(tmp_path / "v.aslf", arr), arr


# ── features ─────────────────────────────────────────────────────────────


def test_features_round_trip_bit_exact(features_file):
    path, arr = features_file
    back = read_features(path)
    assert back.dtype == np.float32
    assert back.tobytes() == arr.tobytes()


def test_features_header_layout(features_file):
    path, _ = features_file
    raw = path.read_bytes()
    assert raw[:4] == b"ASLF"
    assert struct.unpack_from("<HII", raw, 4) == (1, 6, 3)
    assert len(raw) == 14 + 6 * 3 * 4


def test_features_bad_magic_offset_zero(features_file):
    path, _ = features_file
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(FormatError) as exc:
        read_features(path)
    assert exc.value.offset == 0


def test_features_bad_version_offset_four(features_file):
    path, _ = features_file
    raw = bytearray(path.read_bytes())
    raw[4:6] = struct.pack("<H", 9)
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError) as exc:
        read_features(path)
    assert exc.value.offset == 4


def test_features_truncated_reports_length(features_file):
    path, _ = features_file
    raw = path.read_bytes()[:-5]
    path.write_bytes(raw)
    with pytest.raises(FormatError) as exc:
        read_features(path)
    assert exc.value.offset == len(raw)


def test_features_truncated_header(tmp_path):
    path = tmp_path / "short.aslf"
    path.write_bytes(b"ASLF\x01")
    with pytest.raises(FormatError) as exc:
        read_features(path)
    assert exc.value.offset == 5


def test_features_trailing_bytes(features_file):
    path, _ = features_file
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(FormatError) as exc:
        read_features(path)
    assert exc.value.offset == 14 + 72


def test_features_missing_file(tmp_path):
    with pytest.raises(DataError):
        read_features(tmp_path / "nada.aslf")


def test_write_features_requires_matrix(tmp_path):
    with pytest.raises(DataError):
        write_features(tmp_path / "x.aslf", np.zeros(3))


@pytest.mark.parametrize("value", [1e39, -3.5e38, np.inf, np.nan])
def test_write_features_rejects_values_not_finite_in_float32(tmp_path, value):
    arr = np.zeros((3, 2))
    arr[1, 0] = value
    with pytest.raises(DataError, match="não finitos"):
        write_features(tmp_path / "x.aslf", arr)
    assert not (tmp_path / "x.aslf").exists()


def test_write_features_keeps_largest_float32(tmp_path):
    arr = np.full((1, 2), np.finfo(np.float32).max, dtype=np.float64)
    np.testing.assert_array_equal(read_features(write_features(tmp_path / "x.aslf", arr)), arr)


# ── anotações e previsões ───────────────────────────────────────────────


def test_annotation_round_trip(tmp_path):
    anno = Annotation("vid_1", 40, [G(0, 10, 2), G(12, 40, 0)])
    path = write_annotation(tmp_path / "a.json", anno)
    assert read_annotation(path) == anno
    raw = json.loads(path.read_text(encoding="utf-8"))
    assert raw["instances"][0] == {"start": 0, "end": 10, "class": 2}


@pytest.mark.parametrize(
    "payload",
    [
        {"T": 10, "instances": []},
        {"video_id": "v", "T": "10", "instances": []},
        {"video_id": "v", "T": 10, "instances": [{"start": 0, "end": 4}]},
        {"video_id": "v", "T": 10, "instances": [{"start": 0, "end": 12, "class": 0}]},
        {"video_id": "v", "T": 10, "instances": [{"start": 5, "end": 5, "class": 0}]},
        {"video_id": "v", "T": 10, "instances": [{"start": 0, "end": 4, "class": True}]},
    ],
)
def test_annotation_invalid(tmp_path, payload):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(DataError):
        read_annotation(path)


def test_annotation_not_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{nope", encoding="utf-8")
    with pytest.raises(FormatError):
        read_annotation(path)


def test_predictions_round_trip(tmp_path):
    dets = [Detection(1.5, 7.25, 1, 0.75, "b"), Detection(0.0, 3.0, 0, 0.5, "b")]
    path = write_predictions(tmp_path / "p.json", {"b": (32, dets), "a": (8, [])})
    back = read_predictions(path)
    assert list(back) == ["a", "b"]
    assert back["b"].length == 32
    assert back["b"].detections == dets
    assert back["a"].detections == []


def test_predictions_accept_integer_coordinates(tmp_path):
    path = tmp_path / "p.json"
    payload = [{"video_id": "v", "T": 4, "instances": [{"start": 0, "end": 2, "class": 0, "score": 1}]}]
    path.write_text(json.dumps(payload), encoding="utf-8")
    det = read_predictions(path)["v"].detections[0]
    assert (det.start, det.end, det.score) == (0.0, 2.0, 1.0)


def test_predictions_must_be_list(tmp_path):
    path = tmp_path / "p.json"
    path.write_text("{}", encoding="utf-8")
    with pytest.raises(DataError):
        read_predictions(path)


# ── relatórios ───────────────────────────────────────────────────────────


def test_train_log_round_trip(tmp_path):
    records = [{"epoch": 1, "total": 2.5, "sensitivity": {"mu_cls": [0.0]}}, {"epoch": 2, "total": 1.0}]
    path = write_train_log(tmp_path / "log.jsonl", records)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2
    assert lines[1] == '{"epoch": 2, "total": 1.0}'
    assert read_train_log(path) == records


def test_train_log_bad_line(tmp_path):
    path = tmp_path / "log.jsonl"
    path.write_text('{"epoch": 1}\n{oops\n', encoding="utf-8")
    with pytest.raises(FormatError, match="log.jsonl:2"):
        read_train_log(path)


def test_sensitivity_csv(tmp_path):
    curves = export_sensitivity_curves(SensitivityParams.init(2), 1)
    path = write_sensitivity_csv(tmp_path / "curves.csv", curves)
    with open(path, encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["d", "p_cls", "p_sot", "p_eot"]
    assert len(rows) == 102
    assert rows[1][0] == "-0.500000"
    assert [float(v) for v in rows[51]] == pytest.approx([0.0, 1.0, 0.882497, 0.882497], abs=1e-6)


def test_map_json_and_table(tmp_path):
    gts = [Segment("v", 0, 10, 0), Segment("v", 20, 30, 0)]
    dets = [Segment("v", 0, 10, 0, 0.9), Segment("v", 50, 60, 0, 0.8), Segment("v", 20, 30, 0, 0.7)]
    result = mean_ap(dets, gts, EvalConfig((0.5, 0.9)))
    path = write_map_json(tmp_path / "map.json", result)
    assert json.loads(path.read_text(encoding="utf-8")) == {
        "0.5": 0.8333,
        "0.9": 0.8333,
        "average_mAP": 0.8333,
    }
    assert map_table_rows(result)[-1] == {"threshold": "average", "mAP": "0.8333"}


def test_export_csv_creates_file(tmp_path, sample_rows, sample_headers):
    path = export_csv(sample_rows, sample_headers, tmp_path / "report.csv")
    with open(path, encoding="utf-8") as f:
        reader = list(csv.reader(f))
    assert reader[0] == sample_headers
    assert reader[1] == ["0.5", "0.8333"]


def test_export_csv_empty_rows(tmp_path, sample_headers):
    path = export_csv([], sample_headers, tmp_path / "empty.csv")
    with open(path, encoding="utf-8") as f:
        assert list(csv.reader(f)) == [sample_headers]


def test_export_xlsx_creates_file(tmp_path, sample_rows, sample_headers):
    openpyxl = pytest.importorskip("openpyxl")
    path = export_xlsx(sample_rows, sample_headers, tmp_path / "report.xlsx")
    ws = openpyxl.load_workbook(path).active
    assert [c.value for c in ws[1]] == sample_headers
    assert ws.cell(row=3, column=1).value == "average"
    assert ws.cell(row=1, column=1).font.bold


def test_export_xlsx_falls_back_to_csv(tmp_path, monkeypatch, sample_rows, sample_headers):
    monkeypatch.setitem(sys.modules, "openpyxl", None)
    path = export_xlsx(sample_rows, sample_headers, tmp_path / "report.xlsx")
    assert path.suffix == ".csv"
    assert path.is_file()


# ── parâmetros ───────────────────────────────────────────────────────────


def test_parameters_round_trip(tmp_path, tiny_model, rng):
    path = save_parameters(tmp_path / "params.npz", tiny_model)
    assert (tmp_path / "model.json").is_file()
    loaded = load_parameters(path)
    assert loaded.config == tiny_model.config
    state = tiny_model.state_dict()
    assert all(np.array_equal(v, loaded.state_dict()[k]) for k, v in state.items())
    features = rng.normal(size=(16, 4))
    np.testing.assert_array_equal(
        loaded.forward(features)[1][0].logits.data, tiny_model.forward(features)[1][0].logits.data
    )


def test_load_parameters_without_config(tmp_path, tiny_model):
    path = save_parameters(tmp_path / "params.npz", tiny_model)
    (tmp_path / "model.json").unlink()
    with pytest.raises(DataError):
        load_parameters(path)


def test_load_parameters_corrupted_archive(tmp_path, tiny_model):
    path = save_parameters(tmp_path / "params.npz", tiny_model)
    path.write_bytes(b"not a zip")
    with pytest.raises(DataError):
        load_parameters(path)
