"""Encoder com atenção temporal/canal em paralelo, pirâmide e cabeças.

Cada bloco do encoder calcula dois ramos sobre a mesma entrada:

    temporal  softmax(Q_t K_tᵀ / √D) V_t            (T×T scores)
    canal     (softmax(Q_d K_dᵀ / √T) V_d)ᵀ         (D×D scores)

funde-os com (1−θ)·temporal + θ·canal e aplica residual + LayerNorm + FFN
(GELU, largura 4D) + residual + LayerNorm. O nível ℓ da pirâmide é max-pool
(janela 2, stride 2) do nível ℓ−1 seguido de um bloco.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from core.constants import (
    CLS_PRIOR_BIAS,
    CONV_KERNEL,
    DEFAULT_BLOCKS,
    DEFAULT_LEVELS,
    DEFAULT_THETA,
    FFN_MULT,
)
from core.errors import ConfigError, DataError, NumericsError
from core.numerics import (
    Parameter,
    Tensor,
    concat,
    conv1d_same,
    gelu,
    layer_norm,
    max_pool_pairs,
    softmax_rows,
    softplus,
)
from core.sensitivity import InstanceEvaluator, SensitivityConfig, SensitivityParams

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    dim: int
    num_classes: int
    blocks: int = DEFAULT_BLOCKS
    levels: int = DEFAULT_LEVELS
    theta: float = DEFAULT_THETA
    sensitivity: SensitivityConfig = field(default_factory=SensitivityConfig)

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ConfigError("dim: tem de ser ≥ 2 (LayerNorm)")
        if self.num_classes < 1:
            raise ConfigError("num_classes: tem de ser ≥ 1")
        if self.blocks < 1 or self.levels < 1:
            raise ConfigError("blocks/levels: têm de ser ≥ 1")
        if not (0.0 <= self.theta <= 1.0):
            raise ConfigError(f"theta: {self.theta} fora de [0, 1]")

    @property
    def min_length(self) -> int:
        return 2 ** (self.levels - 1)

    def as_dict(self) -> dict:
        return {
            "dim": self.dim,
            "num_classes": self.num_classes,
            "blocks": self.blocks,
            "levels": self.levels,
            "theta": self.theta,
            "sensitivity": self.sensitivity.as_dict(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> ModelConfig:
        raw = dict(raw)
        sens = SensitivityConfig(**raw.pop("sensitivity", {}))
        return cls(sensitivity=sens, **raw)


def _uniform(rng: np.random.Generator, name: str, shape: tuple[int, ...], fan_in: int) -> Parameter:
    bound = 1.0 / np.sqrt(fan_in)
    return Parameter(rng.uniform(-bound, bound, shape), name)


# ---------------------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------------------


@dataclass
class EncoderBlock:
    wq_t: Parameter
    wk_t: Parameter
    wv_t: Parameter
    wq_d: Parameter
    wk_d: Parameter
    wv_d: Parameter
    ln1_gain: Parameter
    ln1_bias: Parameter
    ffn_w1: Parameter
    ffn_b1: Parameter
    ffn_w2: Parameter
    ffn_b2: Parameter
    ln2_gain: Parameter
    ln2_bias: Parameter

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator, prefix: str) -> EncoderBlock:
        hidden = FFN_MULT * dim

        def proj(name: str) -> Parameter:
            return _uniform(rng, f"{prefix}.{name}", (dim, dim), dim)

        def const(name: str, size: int, value: float) -> Parameter:
            return Parameter(np.full(size, value), f"{prefix}.{name}")

        return cls(
            wq_t=proj("wq_t"),
            wk_t=proj("wk_t"),
            wv_t=proj("wv_t"),
            wq_d=proj("wq_d"),
            wk_d=proj("wk_d"),
            wv_d=proj("wv_d"),
            ln1_gain=const("ln1_gain", dim, 1.0),
            ln1_bias=const("ln1_bias", dim, 0.0),
            ffn_w1=_uniform(rng, f"{prefix}.ffn_w1", (dim, hidden), dim),
            ffn_b1=const("ffn_b1", hidden, 0.0),
            ffn_w2=_uniform(rng, f"{prefix}.ffn_w2", (hidden, dim), hidden),
            ffn_b2=const("ffn_b2", dim, 0.0),
            ln2_gain=const("ln2_gain", dim, 1.0),
            ln2_bias=const("ln2_bias", dim, 0.0),
        )

    def parameters(self) -> list[Parameter]:
        return [getattr(self, name) for name in self.__dataclass_fields__]


def _check_sequence(f: Tensor) -> None:
    if f.data.ndim != 2 or f.data.shape[0] == 0:
        raise NumericsError(f"sequência de features vazia ou mal formada {f.data.shape}")


def temporal_attention(f: Tensor, block: EncoderBlock) -> Tensor:
    _check_sequence(f)
    dim = f.data.shape[1]
    q, k, v = f @ block.wq_t, f @ block.wk_t, f @ block.wv_t
    return softmax_rows((q @ k.T) * (1.0 / np.sqrt(dim))) @ v


def channel_attention(f: Tensor, block: EncoderBlock) -> Tensor:
    _check_sequence(f)
    length = f.data.shape[0]
    q, k, v = (f @ block.wq_d).T, (f @ block.wk_d).T, (f @ block.wv_d).T
    return (softmax_rows((q @ k.T) * (1.0 / np.sqrt(length))) @ v).T


def fuse_branches(temporal: Tensor, channel: Tensor, theta: float) -> Tensor:
    return temporal * (1.0 - theta) + channel * theta


def fuse_block(f: Tensor, block: EncoderBlock, theta: float) -> Tensor:
    fused = fuse_branches(temporal_attention(f, block), channel_attention(f, block), theta)
    x = layer_norm(f + fused, block.ln1_gain, block.ln1_bias)
    ffn = gelu(x @ block.ffn_w1 + block.ffn_b1) @ block.ffn_w2 + block.ffn_b2
    return layer_norm(x + ffn, block.ln2_gain, block.ln2_bias)


def encode(f: Tensor, blocks: list[EncoderBlock], theta: float) -> Tensor:
    for block in blocks:
        f = fuse_block(f, block, theta)
    return f


class PyramidFeatures(NamedTuple):
    levels: list[Tensor]
    strides: list[int]


def build_pyramid(f, model: ASLModel) -> PyramidFeatures:
    """Nível 0 = saída do encoder; nível ℓ = bloco(max_pool(nível ℓ−1))."""
    f = f if isinstance(f, Tensor) else Tensor(f)
    cfg = model.config
    length = f.data.shape[0]
    if length < cfg.min_length:
        raise DataError(
            f"T={length} demasiado curto para {cfg.levels} níveis "
            f"(mínimo T={cfg.min_length})"
        )
    level = encode(f, model.encoder, cfg.theta)
    levels, strides = [level], [1]
    for lvl, block in enumerate(model.level_blocks, start=1):
        level = fuse_block(max_pool_pairs(level), block, cfg.theta)
        levels.append(level)
        strides.append(2**lvl)
    return PyramidFeatures(levels, strides)


# ---------------------------------------------------------------------------
# Cabeças
# ---------------------------------------------------------------------------


@dataclass
class HeadParams:
    """Duas convs (k=3) por cabeça, partilhadas por todos os níveis."""

    cls_w1: Parameter
    cls_b1: Parameter
    cls_w2: Parameter
    cls_b2: Parameter
    reg_w1: Parameter
    reg_b1: Parameter
    reg_w2: Parameter
    reg_b2: Parameter

    @classmethod
    def init(cls, dim: int, num_classes: int, rng: np.random.Generator) -> HeadParams:
        fan_in = CONV_KERNEL * dim

        def conv(name: str, c_out: int) -> Parameter:
            return _uniform(rng, f"heads.{name}", (fan_in, c_out), fan_in)

        return cls(
            cls_w1=conv("cls_w1", dim),
            cls_b1=Parameter(np.zeros(dim), "heads.cls_b1"),
            cls_w2=conv("cls_w2", num_classes),
            cls_b2=Parameter(np.full(num_classes, CLS_PRIOR_BIAS), "heads.cls_b2"),
            reg_w1=conv("reg_w1", dim),
            reg_b1=Parameter(np.zeros(dim), "heads.reg_b1"),
            reg_w2=conv("reg_w2", 2),
            reg_b2=Parameter(np.zeros(2), "heads.reg_b2"),
        )

    def parameters(self) -> list[Parameter]:
        return [getattr(self, name) for name in self.__dataclass_fields__]


class LevelPrediction(NamedTuple):
    logits: Tensor  # T_ℓ×N_c
    offsets: Tensor  # T_ℓ×2, em unidades do stride
    stride: int


def predict_heads(pyramid: PyramidFeatures, heads: HeadParams) -> list[LevelPrediction]:
    out = []
    for feats, stride in zip(pyramid.levels, pyramid.strides):
        hidden = gelu(conv1d_same(feats, heads.cls_w1, heads.cls_b1))
        logits = conv1d_same(hidden, heads.cls_w2, heads.cls_b2)
        hidden = gelu(conv1d_same(feats, heads.reg_w1, heads.reg_b1))
        offsets = softplus(conv1d_same(hidden, heads.reg_w2, heads.reg_b2))
        out.append(LevelPrediction(logits, offsets, stride))
    return out


def concat_levels(preds: list[LevelPrediction]) -> tuple[Tensor, Tensor]:
    """Logits e offsets de todos os níveis numa só matriz, nível 0 primeiro."""
    return (
        concat([p.logits for p in preds], axis=0),
        concat([p.offsets for p in preds], axis=0),
    )


# ---------------------------------------------------------------------------
# Modelo
# ---------------------------------------------------------------------------


@dataclass
class ASLModel:
    config: ModelConfig
    encoder: list[EncoderBlock]
    level_blocks: list[EncoderBlock]
    heads: HeadParams
    evaluator: InstanceEvaluator
    sensitivity: SensitivityParams

    def parameters(self) -> list[Parameter]:
        """Parâmetros treináveis, por ordem fixa."""
        params: list[Parameter] = []
        for block in [*self.encoder, *self.level_blocks]:
            params += block.parameters()
        params += self.heads.parameters()
        if self.config.sensitivity.instance_level:
            params += self.evaluator.parameters()
        params += self.sensitivity.parameters()
        return params

    def all_parameters(self) -> list[Parameter]:
        params: list[Parameter] = []
        for block in [*self.encoder, *self.level_blocks]:
            params += block.parameters()
        return (
            params
            + self.heads.parameters()
            + self.evaluator.parameters()
            + self.sensitivity.all_parameters()
        )

    def zero_grad(self) -> None:
        for p in self.all_parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.all_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = {p.name: p for p in self.all_parameters()}
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise DataError(
                f"parâmetros incompatíveis: em falta {missing[:3]}, a mais {unexpected[:3]}"
            )
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.data.shape:
                raise DataError(f"{name}: forma {value.shape} ≠ {p.data.shape}")
            p.data[...] = value

    def forward(self, features) -> tuple[PyramidFeatures, list[LevelPrediction]]:
        pyramid = build_pyramid(features, self)
        return pyramid, predict_heads(pyramid, self.heads)


def init_model(config: ModelConfig, rng: np.random.Generator) -> ASLModel:
    """Pesos uniformes ±1/√fan_in a partir de `rng`; sensibilidade na inicialização fixa."""
    encoder = [
        EncoderBlock.init(config.dim, rng, f"encoder.{k}") for k in range(config.blocks)
    ]
    level_blocks = [
        EncoderBlock.init(config.dim, rng, f"pyramid.{lvl}")
        for lvl in range(1, config.levels)
    ]
    heads = HeadParams.init(config.dim, config.num_classes, rng)
    evaluator = InstanceEvaluator.init(config.dim, rng)
    sensitivity = SensitivityParams.init(config.num_classes, config.sensitivity)
    model = ASLModel(config, encoder, level_blocks, heads, evaluator, sensitivity)
    log.debug(
        "modelo iniciado: %d parâmetros treináveis",
        sum(p.data.size for p in model.parameters()),
    )
    return model


__all__ = [
    "ASLModel",
    "EncoderBlock",
    "HeadParams",
    "LevelPrediction",
    "ModelConfig",
    "PyramidFeatures",
    "build_pyramid",
    "channel_attention",
    "concat_levels",
    "encode",
    "fuse_block",
    "fuse_branches",
    "init_model",
    "predict_heads",
    "temporal_attention",
]
