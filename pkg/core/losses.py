"""Objectivos de treino.

    L = L_cls + L_loc + L_s + λ·L_ASCL

  L_cls   focal sigmoide por classe, frames positivas pesadas por h^cls
  L_loc   DIoU 1D nas frames positivas, pesada por h^loc
  L_s     MSE entre q e a qualidade observada da previsão (dois ramos)
  L_ASCL  contrastiva entre features agregadas pela sensibilidade

L_cls e L_loc são normalizadas por max(N_pos, 1) do batch inteiro.
"""

from __future__ import annotations

import logging
import math
from typing import NamedTuple, Sequence

import numpy as np

from core.assignment import FrameAssignment, GroundTruthInstance
from core.constants import (
    ASCL_TEMPERATURE,
    COSINE_EPS,
    DEFAULT_DELTA,
    FOCAL_ALPHA,
    FOCAL_GAMMA,
)
from core.errors import NonFiniteLossError, NumericsError
from core.numerics import (
    Tensor,
    concat,
    logsumexp,
    maximum,
    minimum,
    sigmoid,
    softplus,
)
from core.sensitivity import SensitivityParams, class_weights_np

log = logging.getLogger(__name__)


def _zero() -> Tensor:
    return Tensor(0.0)


# ---------------------------------------------------------------------------
# Classificação
# ---------------------------------------------------------------------------


def focal_terms(
    logits: Tensor,
    labels: np.ndarray,
    gamma: float = FOCAL_GAMMA,
    alpha: float = FOCAL_ALPHA,
) -> Tensor:
    """Soma por frame da focal sigmoide sobre as N_c classes.

    `labels` = −1 marca frames de fundo (todas as classes negativas).
    """
    n, num_classes = logits.data.shape
    target = np.zeros((n, num_classes))
    pos = labels >= 0
    target[np.flatnonzero(pos), labels[pos]] = 1.0
    sign = 2.0 * target - 1.0
    alpha_t = np.where(target > 0, alpha, 1.0 - alpha)
    z = logits * sign
    # (1 − p_t) = σ(−z); −log p_t = softplus(−z)
    return (sigmoid(-z) ** gamma * softplus(-z) * alpha_t).sum(axis=1)


def focal_loss_weighted(
    logits: Tensor,
    assignment: FrameAssignment,
    h_cls: Tensor | None = None,
) -> Tensor:
    """(1/N_pos)·[Σ_pos h·FL + Σ_bg FL]."""
    terms = focal_terms(logits, assignment.label)
    pos = assignment.positives
    bg = np.flatnonzero(assignment.background)
    n_pos = assignment.n_pos
    if n_pos == 0:
        log.warning("batch sem frames positivas: L_cls só com fundo, normalizada por 1")
    total = _zero()
    if pos.size:
        positive = terms[pos]
        total = total + (positive * h_cls if h_cls is not None else positive).sum()
    if bg.size:
        total = total + terms[bg].sum()
    return total * (1.0 / max(n_pos, 1))


# ---------------------------------------------------------------------------
# Localização
# ---------------------------------------------------------------------------


def diou_loss_1d(a: tuple[float, float], b: tuple[float, float]) -> float:
    """1 − (tIoU − ρ²/c²) entre dois segmentos."""
    (s1, e1), (s2, e2) = a, b
    if not (e1 > s1 and e2 > s2):
        raise NumericsError(f"diou: segmento degenerado {a} / {b}")
    inter = max(0.0, min(e1, e2) - max(s1, s2))
    union = (e1 - s1) + (e2 - s2) - inter
    rho = 0.5 * (s1 + e1) - 0.5 * (s2 + e2)
    c = max(e1, e2) - min(s1, s2)
    return 1.0 - (inter / union - (rho * rho) / (c * c))


def diou_offsets(pred: Tensor, target: np.ndarray) -> Tensor:
    """DIoU por frame com segmentos na forma (esquerda, direita) do centro.

    Ambos os segmentos contêm o centro da frame, logo a intersecção é
    min(l)+min(r) e nunca negativa.
    """
    lp, rp = pred[:, 0], pred[:, 1]
    lg, rg = Tensor(target[:, 0]), Tensor(target[:, 1])
    inter = minimum(lp, lg) + minimum(rp, rg)
    union = lp + rp + lg + rg - inter
    enclosing = maximum(lp, lg) + maximum(rp, rg)
    rho = (rp - lp - rg + lg) * 0.5
    return 1.0 - inter / union + (rho * rho) / (enclosing * enclosing)


def localization_loss(
    offsets: Tensor,
    assignment: FrameAssignment,
    h_loc: Tensor | None = None,
) -> Tensor:
    """(1/N_pos)·Σ_pos h^loc·DIoU; as linhas de fundo de `offsets` são ignoradas."""
    n_pos = assignment.n_pos
    if n_pos == 0:
        return _zero()
    pos = assignment.positives
    per_frame = diou_offsets(offsets[pos], assignment.targets[pos])
    if h_loc is not None:
        per_frame = per_frame * h_loc
    return per_frame.sum() * (1.0 / n_pos)


# ---------------------------------------------------------------------------
# Sensibilidade por instância
# ---------------------------------------------------------------------------


def sensitivity_loss(
    q_cls: Tensor, q_loc: Tensor, target_cls: np.ndarray, target_loc: np.ndarray
) -> Tensor:
    """MSE(q^cls, Q̄^cls) + MSE(q^loc, Q̄^loc)."""
    if q_cls.data.size == 0:
        return _zero()
    d_cls = q_cls - np.asarray(target_cls, dtype=np.float64)
    d_loc = q_loc - np.asarray(target_loc, dtype=np.float64)
    return (d_cls * d_cls).mean() + (d_loc * d_loc).mean()


# ---------------------------------------------------------------------------
# ASCL
# ---------------------------------------------------------------------------


class Anchors(NamedTuple):
    cls: int
    sot: int
    eot: int


def instance_positions(gt: GroundTruthInstance) -> np.ndarray:
    """d de cada frame de entrada da instância."""
    if gt.n_frames == 1:
        return np.zeros(1)
    return np.arange(gt.n_frames) / (gt.n_frames - 1) - 0.5


def ascl_anchors(params: SensitivityParams, gt: GroundTruthInstance) -> Anchors:
    """Frames (absolutas) de maior p^cls, p^sot e p^eot; empate → a mais cedo.

    Com p constante (modo "none") as âncoras caem na frame central (cls) e
    nas frames de início e fim (sot, eot).
    """
    p_cls, p_sot, p_eot = class_weights_np(instance_positions(gt), gt.label, params)
    if params.config.loc_gaussians == 1:
        p_eot = p_sot
    last = gt.n_frames - 1
    return Anchors(
        gt.start + _peak(p_cls, last // 2),
        gt.start + _peak(p_sot, 0),
        gt.start + _peak(p_eot, last),
    )


def _peak(p: np.ndarray, flat: int) -> int:
    if np.ptp(p) == 0.0:
        return flat
    return int(np.argmax(p))


def _window(center: int, radius: int, lo: int, hi: int) -> np.ndarray:
    return np.arange(max(lo, center - radius), min(hi, center + radius + 1))


class ContrastiveSample(NamedTuple):
    label: int
    f_cls: Tensor
    f_loc: Tensor
    f_bg: Tensor | None
    anchors: Anchors | None = None
    t_cls: np.ndarray | None = None
    t_loc: np.ndarray | None = None


def _weighted_mean(f: Tensor, rows: np.ndarray, weights: np.ndarray) -> Tensor:
    w = Tensor((weights / rows.size).reshape(1, -1))
    return (w @ f[rows]).reshape(-1)


def ascl_features(
    f: Tensor,
    params: SensitivityParams,
    gt: GroundTruthInstance,
    delta: float = DEFAULT_DELTA,
) -> ContrastiveSample:
    """Features sensíveis f_cls, f_loc e de fundo f_bg de uma instância.

    `f` são as features do nível 0 (uma linha por frame de entrada). Os
    pesos p entram como constantes.
    """
    if not (0.0 < delta <= 0.5):
        raise NumericsError(f"delta {delta} fora de (0, 0.5]")
    length = f.data.shape[0]
    radius = int(math.floor(delta * gt.n_frames))
    anchors = ascl_anchors(params, gt)

    t_cls = _window(anchors.cls, radius, gt.start, gt.end)
    t_loc = np.union1d(
        _window(anchors.sot, radius, gt.start, gt.end),
        _window(anchors.eot, radius, gt.start, gt.end),
    )
    positions = instance_positions(gt)
    p_cls, p_sot, p_eot = class_weights_np(positions, gt.label, params)
    p_loc = p_sot + p_eot

    f_cls = _weighted_mean(f, t_cls, p_cls[t_cls - gt.start])
    f_loc = _weighted_mean(f, t_loc, p_loc[t_loc - gt.start])

    bg_rows = np.concatenate(
        [
            np.arange(max(0, gt.start - radius), gt.start),
            np.arange(gt.end, min(length, gt.end + radius)),
        ]
    ).astype(np.int64)
    f_bg = _weighted_mean(f, bg_rows, np.ones(bg_rows.size)) if bg_rows.size else None
    return ContrastiveSample(gt.label, f_cls, f_loc, f_bg, anchors, t_cls, t_loc)


def _normalize(v: Tensor) -> Tensor:
    return v * ((v * v).sum() + COSINE_EPS) ** -0.5


def ascl_loss(
    samples: Sequence[ContrastiveSample], temperature: float = ASCL_TEMPERATURE
) -> Tensor:
    """Média, sobre as âncoras com positivos, de −log(Σ_P sim / Σ_{P∪N} sim).

    Âncoras: todos os f_cls e f_loc. f_bg só entra como negativo.
    sim(u, v) = exp(cos(u, v)/τ).
    """
    vectors: list[Tensor] = []
    labels: list[int] = []
    for s in samples:
        vectors += [s.f_cls, s.f_loc]
        labels += [s.label, s.label]
    n_anchor = len(vectors)
    backgrounds = [s.f_bg for s in samples if s.f_bg is not None]
    if n_anchor == 0:
        return _zero()

    z = concat([_normalize(v).reshape(1, -1) for v in vectors + backgrounds], axis=0)
    scores = (z @ z.T) * (1.0 / temperature)
    labels_arr = np.array(labels)
    n_total = n_anchor + len(backgrounds)

    losses: list[Tensor] = []
    for a in range(n_anchor):
        positive = np.flatnonzero(labels_arr == labels_arr[a])
        positive = positive[positive != a]
        if positive.size == 0:
            continue
        others = np.array([k for k in range(n_total) if k != a])
        row = scores[a]
        losses.append(logsumexp(row[others]) - logsumexp(row[positive]))
    if not losses:
        return _zero()
    total = losses[0]
    for extra in losses[1:]:
        total = total + extra
    return total * (1.0 / len(losses))


# ---------------------------------------------------------------------------
# Total
# ---------------------------------------------------------------------------


class LossReport(NamedTuple):
    l_cls: float
    l_loc: float
    l_s: float
    l_ascl: float
    total: float
    lam: float
    graph: Tensor | None = None

    def components(self) -> dict[str, float]:
        return {
            "l_cls": self.l_cls,
            "l_loc": self.l_loc,
            "l_s": self.l_s,
            "l_ascl": self.l_ascl,
            "total": self.total,
        }


def total_loss(l_cls, l_loc, l_s, l_ascl, lam: float) -> LossReport:
    """L = L_cls + L_loc + L_s + λ·L_ASCL; componente não-finita → erro."""
    if lam < 0:
        raise NumericsError(f"lambda {lam} negativo")
    parts = {
        "l_cls": l_cls if isinstance(l_cls, Tensor) else Tensor(l_cls),
        "l_loc": l_loc if isinstance(l_loc, Tensor) else Tensor(l_loc),
        "l_s": l_s if isinstance(l_s, Tensor) else Tensor(l_s),
        "l_ascl": l_ascl if isinstance(l_ascl, Tensor) else Tensor(l_ascl),
    }
    for name, value in parts.items():
        if not np.isfinite(value.data).all():
            raise NonFiniteLossError(name)
    graph = parts["l_cls"] + parts["l_loc"] + parts["l_s"]
    if lam:
        graph = graph + parts["l_ascl"] * lam
    values = {k: float(v.data) for k, v in parts.items()}
    return LossReport(
        values["l_cls"],
        values["l_loc"],
        values["l_s"],
        values["l_ascl"],
        float(graph.data),
        float(lam),
        graph,
    )


__all__ = [
    "Anchors",
    "ContrastiveSample",
    "LossReport",
    "ascl_anchors",
    "ascl_features",
    "ascl_loss",
    "diou_loss_1d",
    "diou_offsets",
    "focal_loss_weighted",
    "focal_terms",
    "instance_positions",
    "localization_loss",
    "sensitivity_loss",
    "total_loss",
]
