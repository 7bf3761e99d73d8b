"""Descodificação das previsões por frame e Soft-NMS gaussiano por classe."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from core.constants import (
    NMS_KEEP,
    NMS_MIN_SCORE,
    NMS_SIGMA,
    PRE_NMS_TOPK,
    SCORE_THRESHOLD,
)
from core.errors import ConfigError
from core.evaluation import tiou
from core.numerics import sigmoid

log = logging.getLogger(__name__)


class Detection(NamedTuple):
    start: float
    end: float
    label: int
    score: float
    video_id: str = ""


def _rank(dets: Iterable[Detection]) -> list[Detection]:
    return sorted(dets, key=lambda d: (-d.score, d.start))


def _array(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def decode(
    levels: Sequence,
    score_threshold: float = SCORE_THRESHOLD,
    pre_nms_topk: int = PRE_NMS_TOPK,
    video_id: str = "",
) -> list[Detection]:
    """Um segmento por (frame, classe) com sigmoid(logit) > limiar.

    `levels` são objectos com `logits`, `offsets` e `stride` (ver
    `core.model.LevelPrediction`). Segmento = (centro − d_s·stride,
    centro + d_e·stride).
    """
    dets: list[Detection] = []
    for lvl in levels:
        scores = sigmoid(_array(lvl.logits))
        offsets = _array(lvl.offsets)
        stride = lvl.stride
        centers = (np.arange(scores.shape[0]) + 0.5) * stride
        frames, classes = np.nonzero(scores > score_threshold)
        for j, c in zip(frames.tolist(), classes.tolist()):
            dets.append(
                Detection(
                    float(centers[j] - offsets[j, 0] * stride),
                    float(centers[j] + offsets[j, 1] * stride),
                    int(c),
                    float(scores[j, c]),
                    video_id,
                )
            )
    return _rank(dets)[:pre_nms_topk]


def soft_nms(
    dets: Iterable[Detection],
    sigma: float = NMS_SIGMA,
    keep_k: int = NMS_KEEP,
    min_score: float = NMS_MIN_SCORE,
) -> list[Detection]:
    """Soft-NMS gaussiano: s ← s·exp(−tIoU²/σ), classes independentes.

    Em cada classe escolhe-se repetidamente a detecção de maior score
    (empate: início mais cedo) até `keep_k` ou até o máximo ficar abaixo de
    `min_score`. O resultado junta as classes por score decrescente.
    """
    by_class: dict[int, list[Detection]] = {}
    for d in dets:
        by_class.setdefault(d.label, []).append(d)

    kept: list[Detection] = []
    for label in sorted(by_class):
        pool = list(by_class[label])
        scores = [d.score for d in pool]
        alive = list(range(len(pool)))
        selected = 0
        while alive and selected < keep_k:
            best = min(alive, key=lambda k: (-scores[k], pool[k].start, k))
            if scores[best] < min_score:
                break
            top = pool[best]._replace(score=scores[best])
            kept.append(top)
            selected += 1
            alive.remove(best)
            for k in alive:
                iou = tiou((top.start, top.end), (pool[k].start, pool[k].end))
                scores[k] *= math.exp(-(iou * iou) / sigma)
    return _rank(kept)[:keep_k]


@dataclass(frozen=True)
class InferenceConfig:
    score_threshold: float = SCORE_THRESHOLD
    pre_nms_topk: int = PRE_NMS_TOPK
    nms_sigma: float = NMS_SIGMA
    keep_k: int = NMS_KEEP
    min_score: float = NMS_MIN_SCORE

    def __post_init__(self) -> None:
        if self.nms_sigma <= 0:
            raise ConfigError("nms_sigma: tem de ser > 0")
        if self.pre_nms_topk < 1 or self.keep_k < 1:
            raise ConfigError("pre_nms_topk/keep_k: têm de ser ≥ 1")


def clip_detections(dets: Iterable[Detection], length: int) -> list[Detection]:
    """Corta a [0, T] e descarta segmentos que ficam degenerados."""
    out = []
    for d in dets:
        start, end = max(0.0, d.start), min(float(length), d.end)
        if end > start:
            out.append(d._replace(start=start, end=end))
    return out


def detect(
    model,
    features,
    config: InferenceConfig | None = None,
    video_id: str = "",
) -> list[Detection]:
    """Forward, descodificação, corte a [0, T] e Soft-NMS de um vídeo."""
    config = config or InferenceConfig()
    _, preds = model.forward(features)
    length = _array(features).shape[0]
    raw = decode(preds, config.score_threshold, config.pre_nms_topk, video_id)
    dets = soft_nms(
        clip_detections(raw, length), config.nms_sigma, config.keep_k, config.min_score
    )
    log.debug("%s: %d candidatos → %d detecções", video_id or "-", len(raw), len(dets))
    return dets


__all__ = [
    "Detection",
    "InferenceConfig",
    "clip_detections",
    "decode",
    "detect",
    "soft_nms",
]
