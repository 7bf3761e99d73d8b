"""
Fixtures partilhadas pelos testes do toolkit ASL.

Os modelos e datasets aqui são minúsculos (T=16, D=4) para que o tape
em numpy corra em milissegundos.
"""

from __future__ import annotations

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from core.dataset import SyntheticConfig, generate  # noqa: E402
from core.model import ModelConfig, init_model  # noqa: E402
from core.trainer import TrainConfig  # noqa: E402

TINY_LENGTH = 16
TINY_DIM = 4
TINY_CLASSES = 3


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model_config():
    return ModelConfig(dim=TINY_DIM, num_classes=TINY_CLASSES, blocks=1, levels=2)


@pytest.fixture
def tiny_model(tiny_model_config):
    return init_model(tiny_model_config, np.random.default_rng(7))


@pytest.fixture
def tiny_synthetic_config():
    return SyntheticConfig(
        seed=3,
        num_classes=TINY_CLASSES,
        train_videos=4,
        test_videos=2,
        length=TINY_LENGTH,
        dim=TINY_DIM,
        instances_per_video=(1, 2),
        duration=(3, 10),
        noise=0.3,
    )


@pytest.fixture
def tiny_data(tiny_synthetic_config):
    return generate(tiny_synthetic_config)


@pytest.fixture
def tiny_train_config():
    return TrainConfig(seed=0, epochs=2, batch_size=2, blocks=1, levels=2)


@pytest.fixture(autouse=True)
def _no_notifications(monkeypatch):
    """Nenhum teste envia notificações reais."""
    monkeypatch.setenv("ASL_NOTIFY_BACKEND", "none")
    from core.notifications import reset_notifier_cache

    reset_notifier_cache()
    yield
    reset_notifier_cache()
