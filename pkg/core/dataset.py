"""Dataset sintético e layout em disco.

Cada classe tem três protótipos fixos (início / meio / fim da acção). Uma
instância de N frames desenha o protótipo de início nas frames com posição
relativa (k + 0.5)/N < 0.2, o de fim acima de 0.8 e o do meio no resto; a
todas as frames soma-se ruído gaussiano. O fundo é só ruído. Instâncias
posteriores sobrepõem-se às anteriores.

Layout de um dataset:

    <dir>/dataset.json               {"num_classes", "dim", "train": [...], "test": [...]}
    <dir>/features/<video_id>.aslf
    <dir>/annotations/<video_id>.json
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from core.assignment import GroundTruthInstance
from core.constants import (
    ANNOTATIONS_DIR,
    DATASET_MANIFEST,
    FEATURE_SUFFIX,
    FEATURES_DIR,
)
from core.errors import ConfigError, DataError
from core.evaluation import Segment
from core.exports import (
    Annotation,
    read_annotation,
    read_features,
    write_annotation,
    write_features,
)

log = logging.getLogger(__name__)

SPLITS = ("train", "test")
START_PHASE = 0.2
END_PHASE = 0.8


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int
    num_classes: int = 3
    train_videos: int = 200
    test_videos: int = 50
    length: int = 256
    dim: int = 32
    instances_per_video: tuple[int, int] = (1, 4)
    duration: tuple[int, int] = (8, 64)
    noise: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances_per_video", tuple(self.instances_per_video))
        object.__setattr__(self, "duration", tuple(self.duration))
        if self.num_classes < 1 or self.dim < 2 or self.length < 1:
            raise ConfigError("num_classes ≥ 1, dim ≥ 2 e length ≥ 1 são obrigatórios")
        if self.train_videos < 0 or self.test_videos < 0:
            raise ConfigError("número de vídeos negativo")
        lo, hi = self.instances_per_video
        if not (0 <= lo <= hi):
            raise ConfigError(f"instances_per_video: intervalo inválido {(lo, hi)}")
        dmin, dmax = self.duration
        if not (1 <= dmin <= dmax):
            raise ConfigError(f"duration: intervalo inválido {(dmin, dmax)}")
        if dmax > self.length:
            raise ConfigError(
                f"duration máxima {dmax} excede o comprimento do vídeo T={self.length}"
            )
        if self.noise < 0:
            raise ConfigError("noise: tem de ser ≥ 0")


class Video(NamedTuple):
    video_id: str
    features: np.ndarray  # T×D float32
    instances: list[GroundTruthInstance]

    @property
    def length(self) -> int:
        return int(self.features.shape[0])


class Dataset(NamedTuple):
    num_classes: int
    dim: int
    videos: list[Video]

    def ground_truth(self) -> list[Segment]:
        return [
            Segment(v.video_id, float(g.start), float(g.end), g.label)
            for v in self.videos
            for g in v.instances
        ]

    def annotations(self) -> list[Annotation]:
        return [Annotation(v.video_id, v.length, list(v.instances)) for v in self.videos]


class SyntheticData(NamedTuple):
    train: Dataset
    test: Dataset
    prototypes: np.ndarray  # N_c×3×D: início, meio, fim


def phase_of(k: int, n_frames: int) -> int:
    """0 = início, 1 = meio, 2 = fim para a frame k de uma instância."""
    rel = (k + 0.5) / n_frames
    if rel < START_PHASE:
        return 0
    if rel > END_PHASE:
        return 2
    return 1


def _render_video(
    rng: np.random.Generator,
    config: SyntheticConfig,
    prototypes: np.ndarray,
    video_id: str,
) -> Video:
    lo, hi = config.instances_per_video
    dmin, dmax = config.duration
    features = config.noise * rng.standard_normal((config.length, config.dim))
    instances: list[GroundTruthInstance] = []
    for _ in range(int(rng.integers(lo, hi + 1))):
        label = int(rng.integers(config.num_classes))
        n_frames = int(rng.integers(dmin, dmax + 1))
        start = int(rng.integers(0, config.length - n_frames + 1))
        instances.append(GroundTruthInstance(start, start + n_frames, label))
    noise = features.copy()
    for g in instances:
        for k in range(g.n_frames):
            features[g.start + k] = prototypes[g.label, phase_of(k, g.n_frames)] + noise[g.start + k]
    return Video(video_id, features.astype(np.float32), instances)


def generate(config: SyntheticConfig) -> SyntheticData:
    """Gera os splits train/test de forma determinística a partir de `seed`."""
    rng = np.random.default_rng(config.seed)
    prototypes = rng.standard_normal((config.num_classes, 3, config.dim))
    splits = {}
    for split, count in (("train", config.train_videos), ("test", config.test_videos)):
        videos = [
            _render_video(rng, config, prototypes, f"{split}_{k:04d}") for k in range(count)
        ]
        splits[split] = Dataset(config.num_classes, config.dim, videos)
    log.info(
        "dataset sintético: %d treino / %d teste, %d classes, T=%d, D=%d",
        config.train_videos,
        config.test_videos,
        config.num_classes,
        config.length,
        config.dim,
    )
    return SyntheticData(splits["train"], splits["test"], prototypes)


# ── disco ───────────────────────────────────────────────────────────────────


def write_dataset(data: SyntheticData, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    (out / FEATURES_DIR).mkdir(parents=True, exist_ok=True)
    (out / ANNOTATIONS_DIR).mkdir(parents=True, exist_ok=True)
    manifest = {
        "num_classes": data.train.num_classes,
        "dim": data.train.dim,
        "train": [v.video_id for v in data.train.videos],
        "test": [v.video_id for v in data.test.videos],
    }
    for video in [*data.train.videos, *data.test.videos]:
        write_features(out / FEATURES_DIR / f"{video.video_id}{FEATURE_SUFFIX}", video.features)
        write_annotation(
            out / ANNOTATIONS_DIR / f"{video.video_id}.json",
            Annotation(video.video_id, video.length, list(video.instances)),
        )
    (out / DATASET_MANIFEST).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return out


def read_manifest(data_dir: str | Path) -> dict:
    path = Path(data_dir) / DATASET_MANIFEST
    if not path.is_file():
        raise DataError(f"{data_dir}: falta {DATASET_MANIFEST}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: JSON inválido ({exc.msg})") from exc
    for key in ("num_classes", "dim", *SPLITS):
        if key not in manifest:
            raise DataError(f"{path}: campo '{key}' em falta")
    return manifest


def load_dataset(data_dir: str | Path, split: str = "train") -> Dataset:
    if split not in SPLITS:
        raise ConfigError(f"split {split!r} não é um de {SPLITS}")
    root = Path(data_dir)
    manifest = read_manifest(root)
    num_classes, dim = int(manifest["num_classes"]), int(manifest["dim"])
    videos = []
    for vid in manifest[split]:
        features = read_features(root / FEATURES_DIR / f"{vid}{FEATURE_SUFFIX}")
        anno = read_annotation(root / ANNOTATIONS_DIR / f"{vid}.json")
        if features.shape != (anno.length, dim):
            raise DataError(
                f"{vid}: features {features.shape} não batem com T={anno.length}, D={dim}"
            )
        if any(g.label >= num_classes for g in anno.instances):
            raise DataError(f"{vid}: classe fora de [0, {num_classes})")
        videos.append(Video(vid, features, anno.instances))
    log.debug("carregados %d vídeos (%s) de %s", len(videos), split, root)
    return Dataset(num_classes, dim, videos)


def load_annotations(annos_dir: str | Path) -> list[Annotation]:
    """Todas as anotações de uma pasta (aceita a raiz do dataset ou annotations/)."""
    root = Path(annos_dir)
    if (root / ANNOTATIONS_DIR).is_dir():
        root = root / ANNOTATIONS_DIR
    if not root.is_dir():
        raise DataError(f"{annos_dir}: pasta de anotações inexistente")
    return [read_annotation(p) for p in sorted(root.glob("*.json"))]


__all__ = [
    "Dataset",
    "SyntheticConfig",
    "SyntheticData",
    "Video",
    "generate",
    "load_annotations",
    "load_dataset",
    "phase_of",
    "read_manifest",
    "write_dataset",
]
