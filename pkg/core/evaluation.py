"""Métricas de detecção temporal: tIoU, AP por classe, mAP e mAP médio.

Protocolo de emparelhamento:
  - detecções ordenadas por score decrescente (empates: início mais cedo);
  - cada detecção emparelha com o GT ainda livre, da mesma classe e do mesmo
    vídeo, com maior tIoU; é TP se esse tIoU ≥ limiar;
  - AP = área sob a curva precisão-recall com envelope de precisão
    (interpolação em todos os pontos).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from core.constants import EVAL_MAX_PER_VIDEO, EVAL_THRESHOLDS
from core.errors import ConfigError, DataError, NumericsError

log = logging.getLogger(__name__)


class Segment(NamedTuple):
    """Segmento anotado ou previsto; `score` só existe em previsões."""

    video_id: str
    start: float
    end: float
    label: int
    score: float = 1.0


def tiou(a: tuple[float, float], b: tuple[float, float]) -> float:
    """|a ∩ b| / |a ∪ b| para dois segmentos [início, fim)."""
    (s1, e1), (s2, e2) = a, b
    if not (e1 > s1 and e2 > s2):
        raise NumericsError(f"tiou: segmento degenerado {a} / {b}")
    inter = max(0.0, min(e1, e2) - max(s1, s2))
    union = (e1 - s1) + (e2 - s2) - inter
    return inter / union


def tiou_many(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """tIoU linha a linha entre dois arrays (n×2) de segmentos válidos."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    inter = np.clip(np.minimum(a[:, 1], b[:, 1]) - np.maximum(a[:, 0], b[:, 0]), 0.0, None)
    union = (a[:, 1] - a[:, 0]) + (b[:, 1] - b[:, 0]) - inter
    return inter / union


def _rank(dets: Sequence[Segment]) -> list[Segment]:
    return sorted(dets, key=lambda d: (-d.score, d.start))


def _pr_curve(tp: np.ndarray, n_gt: int) -> tuple[np.ndarray, np.ndarray]:
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1 - tp)
    recall = ctp / n_gt
    precision = ctp / np.maximum(ctp + cfp, np.finfo(np.float64).eps)
    return recall, precision


def area_under_pr(recall: np.ndarray, precision: np.ndarray) -> float:
    """Área com envelope de precisão (máximo à direita), todos os pontos."""
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def average_precision(
    dets: Iterable[Segment],
    gts: Iterable[Segment],
    label: int,
    threshold: float,
) -> float:
    """AP de uma classe a um limiar de tIoU; NaN se a classe não tem GT."""
    gt_by_video: dict[str, list[Segment]] = {}
    for g in gts:
        if g.label == label:
            gt_by_video.setdefault(g.video_id, []).append(g)
    n_gt = sum(len(v) for v in gt_by_video.values())
    if n_gt == 0:
        return math.nan
    ranked = _rank([d for d in dets if d.label == label])
    if not ranked:
        return 0.0

    used = {vid: np.zeros(len(v), dtype=bool) for vid, v in gt_by_video.items()}
    tp = np.zeros(len(ranked))
    for k, det in enumerate(ranked):
        candidates = gt_by_video.get(det.video_id, [])
        best, best_iou = -1, -1.0
        for j, g in enumerate(candidates):
            if used[det.video_id][j]:
                continue
            iou = tiou((det.start, det.end), (g.start, g.end))
            if iou > best_iou:
                best, best_iou = j, iou
        if best >= 0 and best_iou >= threshold:
            used[det.video_id][best] = True
            tp[k] = 1.0
    recall, precision = _pr_curve(tp, n_gt)
    return area_under_pr(recall, precision)


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple[float, ...] = EVAL_THRESHOLDS
    max_per_video: int = EVAL_MAX_PER_VIDEO

    def __post_init__(self) -> None:
        th = tuple(float(t) for t in self.thresholds)
        if not th:
            raise ConfigError("thresholds: lista vazia")
        if any(not (0.0 < t <= 1.0) for t in th):
            raise ConfigError("thresholds: valores têm de estar em (0, 1]")
        if any(b <= a for a, b in zip(th, th[1:])):
            raise ConfigError("thresholds: têm de ser estritamente crescentes")
        if self.max_per_video < 1:
            raise ConfigError("max_per_video: tem de ser ≥ 1")
        object.__setattr__(self, "thresholds", th)


class MapResult(NamedTuple):
    per_threshold: dict[float, float]
    average: float
    per_class: dict[float, dict[int, float]]

    def as_json(self) -> dict[str, float]:
        """Formato de saída: {"0.5": mAP, ..., "average_mAP": valor}, 4 casas."""
        out = {f"{t:g}": round(v, 4) for t, v in self.per_threshold.items()}
        out["average_mAP"] = round(self.average, 4)
        return out


def cap_per_video(dets: Iterable[Segment], max_per_video: int) -> list[Segment]:
    by_video: dict[str, list[Segment]] = {}
    for d in dets:
        by_video.setdefault(d.video_id, []).append(d)
    capped: list[Segment] = []
    for vid in sorted(by_video):
        capped.extend(_rank(by_video[vid])[:max_per_video])
    return capped


def mean_ap(
    dets: Iterable[Segment],
    gts: Iterable[Segment],
    config: EvalConfig | None = None,
) -> MapResult:
    """mAP por limiar (média sobre classes com GT) e a média sobre limiares."""
    config = config or EvalConfig()
    gts = list(gts)
    if not gts:
        raise DataError("mean_ap: não há ground truth")
    dets = cap_per_video(dets, config.max_per_video)
    labels = sorted({g.label for g in gts})

    per_threshold: dict[float, float] = {}
    per_class: dict[float, dict[int, float]] = {}
    for t in config.thresholds:
        aps = {c: average_precision(dets, gts, c, t) for c in labels}
        per_class[t] = aps
        per_threshold[t] = float(np.mean(list(aps.values())))
    average = float(np.mean(list(per_threshold.values())))
    log.debug("mAP médio %.4f em %d limiares", average, len(per_threshold))
    return MapResult(per_threshold, average, per_class)


__all__ = [
    "EvalConfig",
    "MapResult",
    "Segment",
    "area_under_pr",
    "average_precision",
    "cap_per_video",
    "mean_ap",
    "tiou",
    "tiou_many",
]
