"""Ciclo de treino determinístico.

Cada passo: forward do batch → L (ver `core.losses`) → backward → clip da
norma global → Adam/SGD → clamp de σ → gradientes a zero.

Quantidades fora do grafo (alvos de qualidade Q̄, o q usado em h e a cópia
dos μ/σ que agrega as features do ASCL) vêm de `DetachedInputs`. No treino
são calculadas no próprio forward; o gradcheck fixa-as uma vez para que as
diferenças finitas vejam a mesma função que o backward.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from core.assignment import FrameAssignment, assign_video, concat_assignments
from core.constants import (
    ADAM_BETAS,
    ADAM_EPS,
    DEFAULT_BLOCKS,
    DEFAULT_CLIP_NORM,
    DEFAULT_DELTA,
    DEFAULT_LAMBDA,
    DEFAULT_LEARNING_RATE,
    DEFAULT_LEVELS,
    DEFAULT_THETA,
    EVAL_THRESHOLDS,
)
from core.dataset import Dataset, Video
from core.errors import ConfigError, NonFiniteLossError, TrainingDivergedError
from core.evaluation import EvalConfig, MapResult, mean_ap
from core.inference import InferenceConfig, detect
from core.losses import (
    LossReport,
    ascl_features,
    ascl_loss,
    focal_loss_weighted,
    localization_loss,
    sensitivity_loss,
    total_loss,
)
from core.model import ASLModel, ModelConfig, PyramidFeatures, concat_levels, init_model
from core.notifications import notify
from core.numerics import Parameter, Tensor, concat
from core.sensitivity import (
    SensitivityConfig,
    SensitivityParams,
    clamp_sigma,
    class_weights,
    combine,
    instance_sensitivity,
    quality_targets,
)

log = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    epochs: int = 30
    batch_size: int = 8
    learning_rate: float = DEFAULT_LEARNING_RATE
    lam: float = DEFAULT_LAMBDA
    delta: float = DEFAULT_DELTA
    theta: float = DEFAULT_THETA
    optimizer: str = "adam"
    clip_norm: float = DEFAULT_CLIP_NORM
    blocks: int = DEFAULT_BLOCKS
    levels: int = DEFAULT_LEVELS
    cls_level: str = "learnable"
    loc_level: str = "learnable"
    instance_level: bool = True
    loc_gaussians: int = 2
    shared_gaussians: bool = False
    eval_every: int = 0
    eval_thresholds: tuple[float, ...] = field(default=EVAL_THRESHOLDS)

    def __post_init__(self) -> None:
        object.__setattr__(self, "eval_thresholds", tuple(self.eval_thresholds))
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs e batch_size têm de ser ≥ 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate: tem de ser ≥ 0")
        if self.lam < 0:
            raise ConfigError("lam: tem de ser ≥ 0")
        if not (0.0 < self.delta <= 0.5):
            raise ConfigError(f"delta: {self.delta} fora de (0, 0.5]")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer: {self.optimizer!r} não é um de {OPTIMIZERS}")
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm: tem de ser > 0")
        if self.eval_every < 0:
            raise ConfigError("eval_every: tem de ser ≥ 0")
        # valida os restantes campos através das configs derivadas
        self.sensitivity_config()
        EvalConfig(self.eval_thresholds)

    def sensitivity_config(self) -> SensitivityConfig:
        return SensitivityConfig(
            cls_level=self.cls_level,
            loc_level=self.loc_level,
            instance_level=self.instance_level,
            loc_gaussians=self.loc_gaussians,
            shared=self.shared_gaussians,
        )

    def model_config(self, dim: int, num_classes: int) -> ModelConfig:
        return ModelConfig(
            dim=dim,
            num_classes=num_classes,
            blocks=self.blocks,
            levels=self.levels,
            theta=self.theta,
            sensitivity=self.sensitivity_config(),
        )


# ---------------------------------------------------------------------------
# Forward de um batch
# ---------------------------------------------------------------------------


class VideoForward(NamedTuple):
    video: Video
    pyramid: PyramidFeatures
    logits: Tensor
    offsets: Tensor
    assignment: FrameAssignment


def forward_video(model: ASLModel, video: Video) -> VideoForward:
    pyramid, preds = model.forward(video.features)
    logits, offsets = concat_levels(preds)
    asg = assign_video(video.instances, video.length, model.config.levels)
    return VideoForward(video, pyramid, logits, offsets, asg)


def _instance_q(
    model: ASLModel, fwd: Sequence[VideoForward]
) -> tuple[Tensor, Tensor]:
    """q^cls/q^loc alinhados com as frames positivas do batch.

    O avaliador vê as features das frames de cada instância no nível a que
    foi atribuída; L_s propaga para o encoder através delas.
    """
    pieces_cls, pieces_loc, positions = [], [], []
    base = 0
    for f in fwd:
        asg = f.assignment
        for k, g in enumerate(f.video.instances):
            mine = np.flatnonzero(asg.inside & (asg.instance == k))
            if mine.size == 0:
                continue
            lvl = int(asg.level[mine[0]])
            rows = np.flatnonzero(asg.level == lvl)
            rows = rows[(asg.center[rows] >= g.start) & (asg.center[rows] < g.end)]
            j0, j1 = int(asg.frame[rows[0]]), int(asg.frame[rows[-1]]) + 1
            feats = f.pyramid.levels[lvl][j0:j1]
            q_cls, q_loc = instance_sensitivity(feats, model.evaluator)
            idx = asg.frame[mine] - j0
            pieces_cls.append(q_cls[idx])
            pieces_loc.append(q_loc[idx])
            positions.append(mine + base)
        base += len(asg)
    if not positions:
        empty = Tensor(np.zeros(0))
        return empty, empty
    order = np.argsort(np.concatenate(positions), kind="stable")
    return concat(pieces_cls)[order], concat(pieces_loc)[order]


class DetachedInputs(NamedTuple):
    target_cls: np.ndarray
    target_loc: np.ndarray
    q_cls: np.ndarray | None
    q_loc: np.ndarray | None
    reference: SensitivityParams


def _detached_from(
    model: ASLModel,
    logits: Tensor,
    offsets: Tensor,
    asg: FrameAssignment,
    q: tuple[Tensor, Tensor] | None,
) -> DetachedInputs:
    pos = asg.positives
    true_logits = logits.data[pos, asg.label[pos]]
    centers, strides = asg.center[pos], asg.stride[pos]
    pred = np.stack(
        [
            centers - offsets.data[pos, 0] * strides,
            centers + offsets.data[pos, 1] * strides,
        ],
        axis=1,
    )
    quality = quality_targets(true_logits, pred, asg.gt_segments[pos])
    return DetachedInputs(
        quality.cls,
        quality.loc,
        None if q is None else q[0].data.copy(),
        None if q is None else q[1].data.copy(),
        model.sensitivity.frozen(),
    )


def detached_inputs(model: ASLModel, videos: Sequence[Video]) -> DetachedInputs:
    """Valores fora do grafo para os parâmetros actuais (usado pelo gradcheck)."""
    fwd = [forward_video(model, v) for v in videos]
    logits = concat([f.logits for f in fwd])
    offsets = concat([f.offsets for f in fwd])
    asg = concat_assignments([f.assignment for f in fwd])
    q = _instance_q(model, fwd) if model.config.sensitivity.instance_level else None
    return _detached_from(model, logits, offsets, asg, q)


def batch_loss(
    model: ASLModel,
    videos: Sequence[Video],
    config: TrainConfig,
    detached: DetachedInputs | None = None,
) -> LossReport:
    """L completa de um batch, com grafo vivo em `report.graph`."""
    fwd = [forward_video(model, v) for v in videos]
    logits = concat([f.logits for f in fwd])
    offsets = concat([f.offsets for f in fwd])
    asg = concat_assignments([f.assignment for f in fwd])
    pos = asg.positives

    instance_level = model.config.sensitivity.instance_level
    q = _instance_q(model, fwd) if instance_level else None
    if detached is None:
        detached = _detached_from(model, logits, offsets, asg, q)

    weights = class_weights(asg.distance[pos], asg.label[pos], model.sensitivity)
    h_cls, h_loc = combine(weights.p_cls, weights.p_loc, detached.q_cls, detached.q_loc)

    l_cls = focal_loss_weighted(logits, asg, h_cls)
    l_loc = localization_loss(offsets, asg, h_loc)
    l_s = (
        sensitivity_loss(q[0], q[1], detached.target_cls, detached.target_loc)
        if q is not None
        else 0.0
    )
    l_ascl = 0.0
    if config.lam > 0:
        samples = [
            ascl_features(f.pyramid.levels[0], detached.reference, g, config.delta)
            for f in fwd
            for g in f.video.instances
        ]
        l_ascl = ascl_loss(samples)
    return total_loss(l_cls, l_loc, l_s, l_ascl, config.lam)


# ---------------------------------------------------------------------------
# Optimização
# ---------------------------------------------------------------------------


class SGD:
    def __init__(self, params: Sequence[Parameter], lr: float) -> None:
        self.params = list(params)
        self.lr = lr

    def step(self) -> None:
        for p in self.params:
            if p.grad is not None:
                p.data -= self.lr * p.grad


class Adam:
    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float,
        betas: tuple[float, float] = ADAM_BETAS,
        eps: float = ADAM_EPS,
    ) -> None:
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.betas
        c1, c2 = 1.0 - b1**self.t, 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= b1
            m += (1.0 - b1) * p.grad
            v *= b2
            v += (1.0 - b2) * p.grad * p.grad
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(config: TrainConfig, params: Sequence[Parameter]) -> SGD | Adam:
    if config.optimizer == "sgd":
        return SGD(params, config.learning_rate)
    return Adam(params, config.learning_rate)


def clip_gradients(params: Sequence[Parameter], max_norm: float) -> float:
    """Reescala os gradientes para norma global ≤ max_norm; devolve a norma original."""
    grads = [p.grad for p in params if p.grad is not None]
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


def step(
    model: ASLModel,
    optimizer: SGD | Adam,
    videos: Sequence[Video],
    config: TrainConfig,
    batch_id: int = 0,
) -> LossReport:
    """Um ciclo forward → backward → update; gradientes ficam a zero."""
    model.zero_grad()
    try:
        report = batch_loss(model, videos, config)
    except NonFiniteLossError as exc:
        raise TrainingDivergedError(batch_id, exc.component) from exc
    report.graph.backward()
    params = model.parameters()
    if any(p.grad is not None and not np.all(np.isfinite(p.grad)) for p in params):
        raise TrainingDivergedError(batch_id, "gradiente")
    clip_gradients(params, config.clip_norm)
    optimizer.step()
    clamp_sigma(model.sensitivity)
    model.zero_grad()
    return report._replace(graph=None)


# ---------------------------------------------------------------------------
# Treino e avaliação
# ---------------------------------------------------------------------------


def sensitivity_snapshot(params: SensitivityParams) -> dict[str, list[float]]:
    return {p.name.split(".", 1)[1]: p.data.tolist() for p in params.all_parameters()}


def evaluate_model(
    model: ASLModel,
    dataset: Dataset,
    eval_config: EvalConfig | None = None,
    inference_config: InferenceConfig | None = None,
) -> MapResult:
    dets = [
        d
        for v in dataset.videos
        for d in detect(model, v.features, inference_config, v.video_id)
    ]
    return mean_ap(dets, dataset.ground_truth(), eval_config)


class TrainResult(NamedTuple):
    model: ASLModel
    records: list[dict]


def train(
    dataset: Dataset,
    config: TrainConfig,
    eval_dataset: Dataset | None = None,
) -> TrainResult:
    """Treina `config.epochs` épocas; devolve o modelo e um registo por época."""
    if not dataset.videos:
        raise ConfigError("dataset de treino vazio")
    rng = np.random.default_rng(config.seed)
    model = init_model(config.model_config(dataset.dim, dataset.num_classes), rng)
    optimizer = make_optimizer(config, model.parameters())
    eval_config = EvalConfig(config.eval_thresholds)

    records: list[dict] = []
    batch_id = 0
    n = len(dataset.videos)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        sums = dict.fromkeys(("l_cls", "l_loc", "l_s", "l_ascl", "total"), 0.0)
        batches = 0
        for start in range(0, n, config.batch_size):
            batch = [dataset.videos[i] for i in order[start : start + config.batch_size]]
            try:
                report = step(model, optimizer, batch, config, batch_id)
            except TrainingDivergedError as exc:
                log.error("treino divergiu: %s", exc)
                notify("Treino divergiu", str(exc), severity="error")
                raise
            for key, value in report.components().items():
                sums[key] += value
            batches += 1
            batch_id += 1
        record: dict = {"epoch": epoch, "lam": config.lam}
        record.update({k: v / batches for k, v in sums.items()})
        record["sensitivity"] = sensitivity_snapshot(model.sensitivity)
        if eval_dataset is not None and config.eval_every and epoch % config.eval_every == 0:
            result = evaluate_model(model, eval_dataset, eval_config)
            record["mAP"] = result.as_json()
        records.append(record)
        log.info(
            "época %d: total=%.4f cls=%.4f loc=%.4f s=%.4f ascl=%.4f",
            epoch,
            record["total"],
            record["l_cls"],
            record["l_loc"],
            record["l_s"],
            record["l_ascl"],
        )
    return TrainResult(model, records)


# ---------------------------------------------------------------------------
# Ablação
# ---------------------------------------------------------------------------

# nome → (cls_level/loc_level, instance_level, mantém λ)
_VARIANT_TABLE: dict[str, tuple[str, bool, bool]] = {
    "vanilla": ("none", False, False),
    "class": ("learnable", False, False),
    "instance": ("none", True, False),
    "ascl": ("none", False, True),
    "class_ascl": ("learnable", False, True),
    "ase": ("learnable", True, False),
}
VARIANTS = ("vanilla", "class", "instance", "ascl", "class_ascl", "ase", "full")
DEFAULT_VARIANTS = ("vanilla", "ase", "full")


def variant_config(config: TrainConfig, variant: str) -> TrainConfig:
    """Aplica uma variante de ablação a `config`.

    vanilla: sem p, sem q, λ=0; class / instance: só um nível do avaliador;
    ascl / class_ascl: ASCL sem q, com ou sem p; ase: avaliador completo, λ=0;
    full: como está.
    """
    if variant == "full":
        return config
    if variant not in _VARIANT_TABLE:
        raise ConfigError(f"variante {variant!r} desconhecida (use {', '.join(VARIANTS)})")
    level, instance_level, keep_lam = _VARIANT_TABLE[variant]
    return replace(
        config,
        cls_level=level,
        loc_level=level,
        instance_level=instance_level,
        lam=config.lam if keep_lam else 0.0,
    )


class AblationRow(NamedTuple):
    variant: str
    seed: int
    average_map: float


def ablation(
    dataset: Dataset,
    config: TrainConfig,
    seeds: Sequence[int],
    eval_dataset: Dataset,
    variants: Sequence[str] = DEFAULT_VARIANTS,
) -> list[AblationRow]:
    """Treina cada variante com as mesmas seeds e avalia no `eval_dataset`."""
    if not variants:
        raise ConfigError("variants: lista vazia")
    for variant in variants:
        variant_config(config, variant)
    rows = []
    eval_config = EvalConfig(config.eval_thresholds)
    for seed in seeds:
        for variant in variants:
            cfg = variant_config(replace(config, seed=seed), variant)
            result = train(dataset, cfg)
            score = evaluate_model(result.model, eval_dataset, eval_config).average
            log.info("ablação %s seed=%d: mAP médio %.4f", variant, seed, score)
            rows.append(AblationRow(variant, seed, score))
    return rows


def summarize_ablation(rows: Sequence[AblationRow]) -> dict[str, float]:
    return {
        v: float(np.mean([r.average_map for r in rows if r.variant == v]))
        for v in VARIANTS
        if any(r.variant == v for r in rows)
    }


__all__ = [
    "Adam",
    "AblationRow",
    "DetachedInputs",
    "SGD",
    "TrainConfig",
    "TrainResult",
    "DEFAULT_VARIANTS",
    "VARIANTS",
    "ablation",
    "batch_loss",
    "clip_gradients",
    "detached_inputs",
    "evaluate_model",
    "forward_video",
    "make_optimizer",
    "sensitivity_snapshot",
    "step",
    "summarize_ablation",
    "train",
    "variant_config",
]
