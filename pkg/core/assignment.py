"""Amostragem das localizações ground-truth.

Cada instância vai para um nível da pirâmide consoante a duração; dentro do
nível, uma frame pertence a uma instância quando o seu centro
((j + 0.5)·stride, em frames de entrada) cai em [início, fim). Frames em
várias instâncias ficam com a mais curta (empate: início mais cedo, depois
menor id).

Todas as coordenadas estão em frames de entrada; os alvos de regressão estão
em unidades do stride do nível.
"""

from __future__ import annotations

import logging
import math
from typing import NamedTuple, Sequence

import numpy as np

from core.constants import LEVEL_BASE_DURATION
from core.errors import ConfigError, DataError

log = logging.getLogger(__name__)


class GroundTruthInstance(NamedTuple):
    start: int  # inclusivo
    end: int  # exclusivo
    label: int

    @property
    def n_frames(self) -> int:
        return self.end - self.start


def validate_instances(
    gts: Sequence[GroundTruthInstance], length: int, num_classes: int | None = None
) -> None:
    for k, g in enumerate(gts):
        if not (0 <= g.start < g.end <= length):
            raise DataError(
                f"instância {k} [{g.start}, {g.end}) fora de [0, {length})"
            )
        if g.label < 0 or (num_classes is not None and g.label >= num_classes):
            raise DataError(f"instância {k}: classe {g.label} inválida")


# ---------------------------------------------------------------------------
# Níveis
# ---------------------------------------------------------------------------


def default_level_ranges(levels: int) -> list[tuple[float, float]]:
    """[0,8), [8,16), [16,32), … com o último nível aberto até ∞."""
    if levels < 1:
        raise ConfigError("levels: tem de ser ≥ 1")
    bounds = [0.0] + [float(LEVEL_BASE_DURATION * 2**k) for k in range(levels - 1)]
    bounds.append(math.inf)
    return list(zip(bounds[:-1], bounds[1:]))


def _check_ranges(ranges: Sequence[tuple[float, float]]) -> None:
    if not ranges or ranges[0][0] != 0 or ranges[-1][1] != math.inf:
        raise ConfigError("level_ranges: têm de cobrir [0, ∞)")
    for (lo, hi), (nlo, _) in zip(ranges, list(ranges[1:]) + [(math.inf, None)]):
        if not lo < hi or (nlo != math.inf and nlo != hi):
            raise ConfigError("level_ranges: partição não contígua ou não monótona")


def assign_levels(
    gts: Sequence[GroundTruthInstance],
    level_ranges: Sequence[tuple[float, float]],
) -> list[list[int]]:
    """Índices das instâncias atribuídas a cada nível (intervalos [lo, hi))."""
    _check_ranges(level_ranges)
    out: list[list[int]] = [[] for _ in level_ranges]
    for k, g in enumerate(gts):
        for lvl, (lo, hi) in enumerate(level_ranges):
            if lo <= g.n_frames < hi:
                out[lvl].append(k)
                break
    return out


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------


def frame_center(j, stride: int):
    return (np.asarray(j) + 0.5) * stride


def center_distance(i: float, gt: GroundTruthInstance) -> float:
    """d(i): −0.5 na primeira frame, +0.5 na última, linear entre ambas."""
    if not (gt.start <= i <= gt.end - 1):
        raise DataError(f"frame {i} fora da instância [{gt.start}, {gt.end})")
    if gt.n_frames == 1:
        return 0.0
    return (i - gt.start) / (gt.n_frames - 1) - 0.5


def regression_targets(
    center: float, gt: GroundTruthInstance, stride: int
) -> tuple[float, float]:
    """(centro − início, fim − centro) em unidades do stride."""
    if not (gt.start <= center <= gt.end):
        raise DataError(f"centro {center} fora da instância [{gt.start}, {gt.end})")
    return (center - gt.start) / stride, (gt.end - center) / stride


class FrameAssignment(NamedTuple):
    """Atribuição de todas as frames de um ou mais níveis (arrays alinhados).

    Frames de fundo têm label = instance = −1, distance = NaN e alvos 0.
    """

    level: np.ndarray
    frame: np.ndarray
    stride: np.ndarray
    center: np.ndarray
    inside: np.ndarray
    label: np.ndarray
    instance: np.ndarray
    distance: np.ndarray
    targets: np.ndarray
    gt_segments: np.ndarray

    @property
    def background(self) -> np.ndarray:
        return ~self.inside

    @property
    def n_pos(self) -> int:
        return int(self.inside.sum())

    @property
    def positives(self) -> np.ndarray:
        return np.flatnonzero(self.inside)

    def __len__(self) -> int:
        return int(self.inside.shape[0])


def assign_frames(
    length: int,
    stride: int,
    gts: Sequence[GroundTruthInstance],
    instance_ids: Sequence[int],
    level: int = 0,
) -> FrameAssignment:
    """Atribui as `length` frames de um nível às instâncias desse nível."""
    j = np.arange(length)
    centers = frame_center(j, stride).astype(np.float64)
    owner = np.full(length, -1, dtype=np.int64)

    # pinta da pior para a melhor prioridade; a última escrita ganha
    priority = sorted(instance_ids, key=lambda k: (gts[k].n_frames, gts[k].start, k))
    for k in reversed(priority):
        g = gts[k]
        owner[(centers >= g.start) & (centers < g.end)] = k

    inside = owner >= 0
    label = np.full(length, -1, dtype=np.int64)
    distance = np.full(length, np.nan)
    targets = np.zeros((length, 2))
    segments = np.zeros((length, 2))
    for idx in np.flatnonzero(inside):
        g = gts[owner[idx]]
        label[idx] = g.label
        frame_index = float(np.clip(centers[idx] - 0.5, g.start, g.end - 1))
        distance[idx] = center_distance(frame_index, g)
        targets[idx] = regression_targets(centers[idx], g, stride)
        segments[idx] = (g.start, g.end)

    return FrameAssignment(
        level=np.full(length, level, dtype=np.int64),
        frame=j,
        stride=np.full(length, float(stride)),
        center=centers,
        inside=inside,
        label=label,
        instance=owner,
        distance=distance,
        targets=targets,
        gt_segments=segments,
    )


def level_lengths(length: int, levels: int) -> list[int]:
    return [math.ceil(length / 2**lvl) for lvl in range(levels)]


def assign_video(
    gts: Sequence[GroundTruthInstance],
    length: int,
    levels: int,
    level_ranges: Sequence[tuple[float, float]] | None = None,
) -> FrameAssignment:
    """Atribuição de um vídeo inteiro, níveis concatenados por ordem."""
    validate_instances(gts, length)
    ranges = level_ranges or default_level_ranges(levels)
    if len(ranges) != levels:
        raise ConfigError(f"level_ranges: {len(ranges)} intervalos para {levels} níveis")
    per_level = assign_levels(gts, ranges)
    parts = [
        assign_frames(n, 2**lvl, gts, per_level[lvl], level=lvl)
        for lvl, n in enumerate(level_lengths(length, levels))
    ]
    asg = concat_assignments(parts)
    missing = set(range(len(gts))) - set(asg.instance[asg.inside].tolist())
    if missing:
        log.debug("instâncias sem frames atribuídas: %s", sorted(missing))
    return asg


def concat_assignments(parts: Sequence[FrameAssignment]) -> FrameAssignment:
    return FrameAssignment(
        *(np.concatenate([getattr(p, name) for p in parts]) for name in FrameAssignment._fields)
    )


__all__ = [
    "FrameAssignment",
    "GroundTruthInstance",
    "assign_frames",
    "assign_levels",
    "assign_video",
    "center_distance",
    "concat_assignments",
    "default_level_ranges",
    "frame_center",
    "level_lengths",
    "regression_targets",
    "validate_instances",
]
