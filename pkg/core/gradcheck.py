"""Verificação por diferenças finitas da loss completa num batch minúsculo."""

from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np

from core.dataset import SyntheticConfig, Video, generate
from core.model import ASLModel, init_model
from core.numerics import GradCheckReport, finite_difference_gradcheck
from core.trainer import TrainConfig, batch_loss, detached_inputs

log = logging.getLogger(__name__)

TINY_LENGTH = 16
TINY_DIM = 4
TINY_CLASSES = 3


class GradCheckCase(NamedTuple):
    model: ASLModel
    videos: list[Video]
    config: TrainConfig


def tiny_case(seed: int, lam: float = 0.3) -> GradCheckCase:
    """Dois vídeos T=16, D=4, N_c=3, 1 bloco, 2 níveis.

    μ/σ são afastados da inicialização para que nenhuma âncora ou frame
    fique em empate.
    """
    data = generate(
        SyntheticConfig(
            seed=seed,
            num_classes=TINY_CLASSES,
            train_videos=2,
            test_videos=0,
            length=TINY_LENGTH,
            dim=TINY_DIM,
            instances_per_video=(1, 2),
            duration=(3, 12),
            noise=0.5,
        )
    )
    config = TrainConfig(seed=seed, lam=lam, blocks=1, levels=2)
    rng = np.random.default_rng(seed + 10_000)
    model = init_model(config.model_config(TINY_DIM, TINY_CLASSES), rng)
    sens = model.sensitivity
    for mu in (sens.mu_cls, sens.mu_sot, sens.mu_eot):
        mu.data += rng.uniform(-0.2, 0.2, mu.data.shape)
    for sigma in sens.sigmas():
        sigma.data[...] = rng.uniform(0.5, 1.5, sigma.data.shape)
    # logits perto de 0 dão gradientes focais com ordem de grandeza útil
    model.heads.cls_b2.data[...] = 0.0
    return GradCheckCase(model, list(data.train.videos), config)


def run_gradcheck(
    seed: int,
    max_entries: int | None = None,
    lam: float = 0.3,
) -> list[GradCheckReport]:
    """Um relatório por parâmetro treinável do modelo."""
    case = tiny_case(seed, lam)
    detached = detached_inputs(case.model, case.videos)

    def loss_fn():
        return batch_loss(case.model, case.videos, case.config, detached).graph

    reports = finite_difference_gradcheck(
        loss_fn,
        case.model.parameters(),
        max_entries=max_entries,
        rng=np.random.default_rng(seed),
    )
    failed = [r.parameter for r in reports if not r.passed()]
    log.info(
        "gradcheck seed=%d: %d parâmetros, %d falhas", seed, len(reports), len(failed)
    )
    return reports


__all__ = ["GradCheckCase", "run_gradcheck", "tiny_case"]
