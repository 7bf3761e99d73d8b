"""Formatos de ficheiro: features, anotações, previsões, relatórios e parâmetros.

Features (`.aslf`), little-endian:

    offset 0   magic   b"ASLF"
    offset 4   versão  u16
    offset 6   T       u32
    offset 10  D       u32
    offset 14  T·D valores float32, por linhas

Anotações e previsões em JSON:

    {"video_id": str, "T": int,
     "instances": [{"start": int, "end": int, "class": int}, ...]}

As previsões acrescentam "score" a cada instância (e start/end reais).
"""

from __future__ import annotations

import csv
import json
import logging
import struct
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from core.assignment import GroundTruthInstance, validate_instances
from core.constants import FEATURE_MAGIC, FEATURE_VERSION
from core.errors import DataError, FormatError
from core.inference import Detection
from core.model import ASLModel, ModelConfig, init_model

log = logging.getLogger(__name__)

_HEADER = struct.Struct("<4sHII")


class Annotation(NamedTuple):
    video_id: str
    length: int
    instances: list[GroundTruthInstance]


# ── features ────────────────────────────────────────────────────────────────


def write_features(path: str | Path, features: np.ndarray) -> Path:
    path = Path(path)
    arr = np.asarray(features)
    if arr.ndim != 2:
        raise DataError(f"features têm de ser T×D, recebido {arr.shape}")
    t, d = arr.shape
    with np.errstate(over="ignore", invalid="ignore"):
        body_arr = np.ascontiguousarray(arr, dtype="<f4")
    if not np.isfinite(body_arr).all():
        bad = int(np.count_nonzero(~np.isfinite(body_arr)))
        raise DataError(f"{path.name}: {bad} valores não finitos em float32")
    body = body_arr.tobytes()
    path.write_bytes(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, t, d) + body)
    return path


def read_features(path: str | Path) -> np.ndarray:
    """Lê uma matriz T×D float32; erros de formato indicam o offset."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path.name}: cabeçalho truncado", len(raw))
    magic, version, t, d = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path.name}: magic {magic!r} inválido", 0)
    if version != FEATURE_VERSION:
        raise FormatError(f"{path.name}: versão {version} não suportada", 4)
    expected = _HEADER.size + 4 * t * d
    if len(raw) < expected:
        raise FormatError(
            f"{path.name}: dados truncados ({len(raw)} de {expected} bytes)", len(raw)
        )
    if len(raw) > expected:
        raise FormatError(f"{path.name}: bytes a mais após os dados", expected)
    return np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(t, d).astype(
        np.float32
    )


# ── JSON ────────────────────────────────────────────────────────────────────


def _load_json(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path.name}: JSON inválido ({exc.msg})", exc.pos) from exc


def _field(obj: Mapping, key: str, kind: type, where: str):
    if not isinstance(obj, Mapping) or key not in obj:
        raise DataError(f"{where}: campo '{key}' em falta")
    value = obj[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise DataError(f"{where}: campo '{key}' não é {kind.__name__}")
    return value


def annotation_to_json(anno: Annotation) -> dict:
    return {
        "video_id": anno.video_id,
        "T": anno.length,
        "instances": [
            {"start": g.start, "end": g.end, "class": g.label} for g in anno.instances
        ],
    }


def write_annotation(path: str | Path, anno: Annotation) -> Path:
    path = Path(path)
    path.write_text(json.dumps(annotation_to_json(anno), indent=2), encoding="utf-8")
    return path


def parse_annotation(raw, where: str = "anotação") -> Annotation:
    video_id = _field(raw, "video_id", str, where)
    length = _field(raw, "T", int, where)
    items = _field(raw, "instances", list, where)
    instances = [
        GroundTruthInstance(
            _field(item, "start", int, f"{where}[{k}]"),
            _field(item, "end", int, f"{where}[{k}]"),
            _field(item, "class", int, f"{where}[{k}]"),
        )
        for k, item in enumerate(items)
    ]
    validate_instances(instances, length)
    return Annotation(video_id, length, instances)


def read_annotation(path: str | Path) -> Annotation:
    path = Path(path)
    return parse_annotation(_load_json(path), path.name)


def write_predictions(
    path: str | Path,
    predictions: Mapping[str, tuple[int, Sequence]],
) -> Path:
    """`predictions`: video_id → (T, detecções com start/end/label/score)."""
    path = Path(path)
    payload = [
        {
            "video_id": vid,
            "T": int(length),
            "instances": [
                {
                    "start": float(d.start),
                    "end": float(d.end),
                    "class": int(d.label),
                    "score": float(d.score),
                }
                for d in dets
            ],
        }
        for vid, (length, dets) in sorted(predictions.items())
    ]
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return path


class PredictedVideo(NamedTuple):
    length: int
    detections: list[Detection]


def read_predictions(path: str | Path) -> dict[str, PredictedVideo]:
    path = Path(path)
    raw = _load_json(path)
    if not isinstance(raw, list):
        raise DataError(f"{path.name}: esperada uma lista de vídeos")
    out: dict[str, PredictedVideo] = {}
    for k, entry in enumerate(raw):
        where = f"{path.name}[{k}]"
        vid = _field(entry, "video_id", str, where)
        dets = [
            Detection(
                _field(item, "start", float, where),
                _field(item, "end", float, where),
                _field(item, "class", int, where),
                _field(item, "score", float, where),
                vid,
            )
            for item in _field(entry, "instances", list, where)
        ]
        out[vid] = PredictedVideo(_field(entry, "T", int, where), dets)
    return out


# ── relatórios ──────────────────────────────────────────────────────────────


def write_train_log(path: str | Path, records: Iterable[Mapping]) -> Path:
    """Uma linha JSON por época, chaves ordenadas (reprodutível byte a byte)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def read_train_log(path: str | Path) -> list[dict]:
    path = Path(path)
    out = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if line.strip():
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path.name}:{n + 1}: {exc.msg}", exc.pos) from exc
    return out


CURVE_HEADERS = ["d", "p_cls", "p_sot", "p_eot"]


def write_sensitivity_csv(path: str | Path, curves) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADERS)
        for row in zip(curves.d, curves.p_cls, curves.p_sot, curves.p_eot):
            w.writerow([f"{v:.6f}" for v in row])
    return path


def write_map_json(path: str | Path, result) -> Path:
    path = Path(path)
    path.write_text(json.dumps(result.as_json(), indent=2), encoding="utf-8")
    return path


def map_table_rows(result) -> list[dict]:
    rows = [
        {"threshold": f"{t:g}", "mAP": f"{v:.4f}"}
        for t, v in result.per_threshold.items()
    ]
    rows.append({"threshold": "average", "mAP": f"{result.average:.4f}"})
    return rows


def export_csv(rows: list[dict], headers: list[str], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(headers)
        for r in rows:
            w.writerow([r.get(h, "") for h in headers])
    return path


def export_xlsx(rows: list[dict], headers: list[str], path: str | Path) -> Path:
    """Exporta para Excel (.xlsx); sem openpyxl cai para CSV ao lado."""
    path = Path(path)
    try:
        from openpyxl import Workbook
        from openpyxl.styles import Alignment, Font, PatternFill
        from openpyxl.utils import get_column_letter
    except ImportError:
        log.warning("openpyxl não instalado; a exportar CSV em vez de XLSX")
        return export_csv(rows, headers, path.with_suffix(".csv"))

    wb = Workbook()
    ws = wb.active
    ws.title = path.stem[:31]

    header_fill = PatternFill("solid", fgColor="1F4E79")
    header_font = Font(bold=True, color="FFFFFF")
    for col, h in enumerate(headers, 1):
        cell = ws.cell(row=1, column=col, value=h)
        cell.fill = header_fill
        cell.font = header_font
        cell.alignment = Alignment(horizontal="center")

    for row_idx, row in enumerate(rows, 2):
        for col_idx, h in enumerate(headers, 1):
            ws.cell(row=row_idx, column=col_idx, value=row.get(h, ""))

    for col_idx, h in enumerate(headers, 1):
        width = max([len(str(h))] + [len(str(r.get(h, ""))) for r in rows])
        ws.column_dimensions[get_column_letter(col_idx)].width = min(width + 4, 50)

    wb.save(path)
    return path


# ── parâmetros ──────────────────────────────────────────────────────────────

MODEL_CONFIG_NAME = "model.json"


def save_parameters(path: str | Path, model: ASLModel) -> Path:
    """Grava `params.npz` e, ao lado, `model.json` com a configuração."""
    path = Path(path)
    np.savez(path, **model.state_dict())
    (path.parent / MODEL_CONFIG_NAME).write_text(
        json.dumps(model.config.as_dict(), indent=2, sort_keys=True), encoding="utf-8"
    )
    return path


def load_parameters(path: str | Path) -> ASLModel:
    path = Path(path)
    cfg_path = path.parent / MODEL_CONFIG_NAME
    raw = _load_json(cfg_path)
    try:
        config = ModelConfig.from_dict(raw)
    except TypeError as exc:
        raise DataError(f"{cfg_path.name}: {exc}") from exc
    try:
        with np.load(path) as archive:
            state = {k: archive[k] for k in archive.files}
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: arquivo de parâmetros ilegível ({exc})") from exc
    model = init_model(config, np.random.default_rng(0))
    model.load_state_dict(state)
    return model


__all__ = [
    "Annotation",
    "PredictedVideo",
    "annotation_to_json",
    "export_csv",
    "export_xlsx",
    "load_parameters",
    "map_table_rows",
    "parse_annotation",
    "read_annotation",
    "read_features",
    "read_predictions",
    "read_train_log",
    "save_parameters",
    "write_annotation",
    "write_features",
    "write_map_json",
    "write_predictions",
    "write_sensitivity_csv",
    "write_train_log",
]
