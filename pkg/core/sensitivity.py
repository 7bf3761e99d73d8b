"""Avaliador de sensibilidade das frames.

Dois níveis de peso por frame dentro de uma acção:

  - classe (p): gaussianas aprendíveis sobre a posição normalizada
    d ∈ [−0.5, 0.5], uma para classificação e duas (início/fim) para
    localização;
  - instância (q): pequena rede conv → fc → sigmoide, supervisionada pela
    qualidade da previsão da própria frame.

O peso de treino final é h = p + q, com q constante para as losses de
classificação e localização (só L_s treina o avaliador).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, NamedTuple

import numpy as np

from core.constants import (
    CONV_KERNEL,
    CURVE_SAMPLES,
    MU_CLS_INIT,
    MU_EOT_INIT,
    MU_SOT_INIT,
    SIGMA_INIT,
    SIGMA_MAX,
    SIGMA_MIN,
)
from core.errors import ConfigError
from core.evaluation import tiou_many
from core.numerics import Parameter, Tensor, conv1d_same, gelu, sigmoid

log = logging.getLogger(__name__)

ClassLevel = Literal["learnable", "fixed", "none"]
CLASS_LEVELS = ("learnable", "fixed", "none")


@dataclass(frozen=True)
class SensitivityConfig:
    """Variantes do avaliador.

    cls_level e loc_level escolhem, de forma independente, o modo das
    gaussianas de classificação e de localização: "learnable" (μ/σ
    treinados), "fixed" (μ/σ na inicialização) ou "none" (p constante).
    instance_level=False anula q. loc_gaussians=1 usa uma só gaussiana de
    localização centrada em 0; shared=True reutiliza a gaussiana de
    classificação na localização (loc_level tem de igualar cls_level).
    """

    cls_level: ClassLevel = "learnable"
    loc_level: ClassLevel = "learnable"
    instance_level: bool = True
    loc_gaussians: int = 2
    shared: bool = False

    def __post_init__(self) -> None:
        for name in ("cls_level", "loc_level"):
            value = getattr(self, name)
            if value not in CLASS_LEVELS:
                raise ConfigError(f"{name}: {value!r} não é um de {CLASS_LEVELS}")
        if self.loc_gaussians not in (1, 2):
            raise ConfigError("loc_gaussians: tem de ser 1 ou 2")
        if self.shared and self.loc_level != self.cls_level:
            raise ConfigError("shared: loc_level tem de ser igual a cls_level")

    def as_dict(self) -> dict:
        return {
            "cls_level": self.cls_level,
            "loc_level": self.loc_level,
            "instance_level": self.instance_level,
            "loc_gaussians": self.loc_gaussians,
            "shared": self.shared,
        }


# ---------------------------------------------------------------------------
# Sensibilidade por classe
# ---------------------------------------------------------------------------


def gaussian_np(d, mu, sigma):
    """exp(−(d−μ)² / (2σ²)), a mesma forma para classificação e localização."""
    diff = np.asarray(d, dtype=np.float64) - mu
    return np.exp(-(diff * diff) / (2.0 * sigma * sigma))


def gaussian(d: np.ndarray, mu: Tensor, sigma: Tensor) -> Tensor:
    diff = Tensor(d) - mu
    return (-(diff * diff) / (sigma * sigma * 2.0)).exp()


@dataclass
class SensitivityParams:
    """μ/σ por classe: classificação, início (sot) e fim (eot).

    Os campos são `Parameter`, excepto na cópia de `frozen()`, que guarda
    `Tensor` simples sem gradiente.
    """

    mu_cls: Tensor
    sigma_cls: Tensor
    mu_sot: Tensor
    sigma_sot: Tensor
    mu_eot: Tensor
    sigma_eot: Tensor
    config: SensitivityConfig = field(default_factory=SensitivityConfig)

    @classmethod
    def init(
        cls, num_classes: int, config: SensitivityConfig | None = None
    ) -> SensitivityParams:
        config = config or SensitivityConfig()
        mu_sot = MU_SOT_INIT if config.loc_gaussians == 2 else 0.0

        def full(name: str, value: float) -> Parameter:
            return Parameter(np.full(num_classes, value), f"sensitivity.{name}")

        return cls(
            mu_cls=full("mu_cls", MU_CLS_INIT),
            sigma_cls=full("sigma_cls", SIGMA_INIT),
            mu_sot=full("mu_sot", mu_sot),
            sigma_sot=full("sigma_sot", SIGMA_INIT),
            mu_eot=full("mu_eot", MU_EOT_INIT),
            sigma_eot=full("sigma_eot", SIGMA_INIT),
            config=config,
        )

    @property
    def num_classes(self) -> int:
        return int(self.mu_cls.data.shape[0])

    def all_parameters(self) -> list[Parameter]:
        return [
            self.mu_cls,
            self.sigma_cls,
            self.mu_sot,
            self.sigma_sot,
            self.mu_eot,
            self.sigma_eot,
        ]

    def parameters(self) -> list[Parameter]:
        """Parâmetros que recebem gradiente na variante configurada."""
        cfg = self.config
        params = []
        if cfg.cls_level == "learnable":
            params += [self.mu_cls, self.sigma_cls]
        if cfg.shared or cfg.loc_level != "learnable":
            return params
        params += [self.mu_sot, self.sigma_sot]
        if cfg.loc_gaussians == 2:
            params += [self.mu_eot, self.sigma_eot]
        return params

    def frozen(self) -> SensitivityParams:
        """Cópia desligada do grafo (valores usados como constantes)."""
        return SensitivityParams(
            *(Tensor(p.data.copy(), p.name) for p in self.all_parameters()),
            config=self.config,
        )

    def sigmas(self) -> list[Parameter]:
        return [self.sigma_cls, self.sigma_sot, self.sigma_eot]


class ClassWeights(NamedTuple):
    p_cls: Tensor
    p_sot: Tensor
    p_eot: Tensor
    p_loc: Tensor


def class_weights(
    d: np.ndarray, labels: np.ndarray, params: SensitivityParams
) -> ClassWeights:
    """p^cls, p^sot, p^eot e p^loc para as frames dadas (vectores (n,))."""
    d = np.asarray(d, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    cfg = params.config
    if cfg.cls_level == "none":
        p_cls = Tensor(np.ones_like(d))
    else:
        p_cls = gaussian(d, params.mu_cls[labels], params.sigma_cls[labels])
    if cfg.shared:
        half = p_cls * 0.5
        return ClassWeights(p_cls, half, half, p_cls)
    if cfg.loc_level == "none":
        half = Tensor(np.full_like(d, 0.5))
        return ClassWeights(p_cls, half, half, Tensor(np.ones_like(d)))
    p_sot = gaussian(d, params.mu_sot[labels], params.sigma_sot[labels])
    if cfg.loc_gaussians == 1:
        return ClassWeights(p_cls, p_sot, Tensor(np.zeros_like(d)), p_sot)
    p_eot = gaussian(d, params.mu_eot[labels], params.sigma_eot[labels])
    return ClassWeights(p_cls, p_sot, p_eot, p_sot + p_eot)


def class_weights_np(
    d: np.ndarray, label: int, params: SensitivityParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(p^cls, p^sot, p^eot) como arrays, sem grafo."""
    d = np.asarray(d, dtype=np.float64)
    cfg = params.config
    if cfg.cls_level == "none":
        p_cls = np.ones_like(d)
    else:
        p_cls = gaussian_np(d, params.mu_cls.data[label], params.sigma_cls.data[label])
    if cfg.shared:
        return p_cls, 0.5 * p_cls, 0.5 * p_cls
    if cfg.loc_level == "none":
        return p_cls, np.full_like(d, 0.5), np.full_like(d, 0.5)
    p_sot = gaussian_np(d, params.mu_sot.data[label], params.sigma_sot.data[label])
    if cfg.loc_gaussians == 1:
        return p_cls, p_sot, np.zeros_like(d)
    p_eot = gaussian_np(d, params.mu_eot.data[label], params.sigma_eot.data[label])
    return p_cls, p_sot, p_eot


def class_sensitivity_cls(d: float, label: int, params: SensitivityParams) -> float:
    return float(class_weights_np(d, label, params)[0])


def class_sensitivity_loc(
    d: float, label: int, params: SensitivityParams
) -> tuple[float, float, float]:
    """(p^sot, p^eot, p^loc) com p^loc = p^sot + p^eot."""
    _, sot, eot = class_weights_np(d, label, params)
    return float(sot), float(eot), float(sot + eot)


def clamp_sigma(params: SensitivityParams) -> SensitivityParams:
    """Mantém todos os σ em [SIGMA_MIN, SIGMA_MAX] (in-place)."""
    for sigma in params.sigmas():
        np.clip(sigma.data, SIGMA_MIN, SIGMA_MAX, out=sigma.data)
    return params


# ---------------------------------------------------------------------------
# Sensibilidade por instância
# ---------------------------------------------------------------------------


@dataclass
class InstanceEvaluator:
    """Φ^cls e Φ^loc: conv temporal (k=3, D→D), GELU, fc D→1, sigmoide."""

    cls_conv_w: Parameter
    cls_conv_b: Parameter
    cls_fc_w: Parameter
    cls_fc_b: Parameter
    loc_conv_w: Parameter
    loc_conv_b: Parameter
    loc_fc_w: Parameter
    loc_fc_b: Parameter

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator) -> InstanceEvaluator:
        def uniform(name: str, shape: tuple[int, ...], fan_in: int) -> Parameter:
            bound = 1.0 / np.sqrt(fan_in)
            return Parameter(rng.uniform(-bound, bound, shape), f"evaluator.{name}")

        def zeros(name: str, size: int) -> Parameter:
            return Parameter(np.zeros(size), f"evaluator.{name}")

        conv_in = CONV_KERNEL * dim
        return cls(
            cls_conv_w=uniform("cls_conv_w", (conv_in, dim), conv_in),
            cls_conv_b=zeros("cls_conv_b", dim),
            cls_fc_w=uniform("cls_fc_w", (dim, 1), dim),
            cls_fc_b=zeros("cls_fc_b", 1),
            loc_conv_w=uniform("loc_conv_w", (conv_in, dim), conv_in),
            loc_conv_b=zeros("loc_conv_b", dim),
            loc_fc_w=uniform("loc_fc_w", (dim, 1), dim),
            loc_fc_b=zeros("loc_fc_b", 1),
        )

    def parameters(self) -> list[Parameter]:
        return [
            self.cls_conv_w,
            self.cls_conv_b,
            self.cls_fc_w,
            self.cls_fc_b,
            self.loc_conv_w,
            self.loc_conv_b,
            self.loc_fc_w,
            self.loc_fc_b,
        ]


def _phi(f: Tensor, conv_w: Tensor, conv_b: Tensor, fc_w: Tensor, fc_b: Tensor) -> Tensor:
    hidden = gelu(conv1d_same(f, conv_w, conv_b))
    return sigmoid(hidden @ fc_w + fc_b).reshape(-1)


def instance_sensitivity(f: Tensor, evaluator: InstanceEvaluator) -> tuple[Tensor, Tensor]:
    """(q^cls, q^loc) para as N_f frames de uma instância."""
    q_cls = _phi(
        f, evaluator.cls_conv_w, evaluator.cls_conv_b, evaluator.cls_fc_w, evaluator.cls_fc_b
    )
    q_loc = _phi(
        f, evaluator.loc_conv_w, evaluator.loc_conv_b, evaluator.loc_fc_w, evaluator.loc_fc_b
    )
    return q_cls, q_loc


class QualityTargets(NamedTuple):
    cls: np.ndarray
    loc: np.ndarray


def quality_targets(
    true_logits: np.ndarray,
    pred_segments: np.ndarray,
    gt_segments: np.ndarray,
) -> QualityTargets:
    """Q̄^cls = sigmoid(logit da classe verdadeira); Q̄^loc = tIoU(previsto, GT).

    Recebe arrays, pelo que os alvos são constantes por construção.
    """
    true_logits = np.asarray(true_logits, dtype=np.float64).reshape(-1)
    if true_logits.size == 0:
        return QualityTargets(np.zeros(0), np.zeros(0))
    return QualityTargets(
        np.asarray(sigmoid(true_logits), dtype=np.float64).reshape(-1),
        tiou_many(pred_segments, gt_segments),
    )


def combine(
    p_cls: Tensor,
    p_loc: Tensor,
    q_cls: np.ndarray | Tensor | None,
    q_loc: np.ndarray | Tensor | None,
) -> tuple[Tensor, Tensor]:
    """h = p + q, com q sempre fora do grafo; sem q, h = p."""
    if q_cls is None or q_loc is None:
        return p_cls, p_loc

    def const(q) -> np.ndarray:
        return q.data if isinstance(q, Tensor) else np.asarray(q, dtype=np.float64)

    return p_cls + const(q_cls), p_loc + const(q_loc)


# ---------------------------------------------------------------------------
# Curvas
# ---------------------------------------------------------------------------


class SensitivityCurves(NamedTuple):
    d: np.ndarray
    p_cls: np.ndarray
    p_sot: np.ndarray
    p_eot: np.ndarray


def export_sensitivity_curves(
    params: SensitivityParams, label: int, samples: int = CURVE_SAMPLES
) -> SensitivityCurves:
    """Amostra p^cls, p^sot e p^eot em `samples` pontos de [−0.5, 0.5]."""
    if not (0 <= label < params.num_classes):
        raise ConfigError(
            f"classe {label} desconhecida (modelo tem {params.num_classes} classes)"
        )
    d = np.linspace(-0.5, 0.5, samples)
    p_cls, p_sot, p_eot = class_weights_np(d, label, params)
    return SensitivityCurves(d, p_cls, p_sot, p_eot)


def curve_peaks(curves: SensitivityCurves) -> dict[str, float]:
    """Posição d do máximo de cada curva (primeiro máximo em empate)."""
    return {
        "p_cls": float(curves.d[np.argmax(curves.p_cls)]),
        "p_sot": float(curves.d[np.argmax(curves.p_sot)]),
        "p_eot": float(curves.d[np.argmax(curves.p_eot)]),
    }


__all__ = [
    "ClassWeights",
    "InstanceEvaluator",
    "QualityTargets",
    "SensitivityConfig",
    "SensitivityCurves",
    "SensitivityParams",
    "clamp_sigma",
    "class_sensitivity_cls",
    "class_sensitivity_loc",
    "class_weights",
    "class_weights_np",
    "combine",
    "curve_peaks",
    "export_sensitivity_curves",
    "instance_sensitivity",
    "quality_targets",
]
