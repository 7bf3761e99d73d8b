"""Primitivas numéricas com gradiente em modo reverso.

Cada operação sobre `Tensor` regista, no nó resultante, os pais e a função
que propaga o gradiente de saída para cada um deles. `Tensor.backward()`
ordena o grafo topologicamente e acumula os gradientes nas folhas
(`Parameter`). Tudo em float64; as tolerâncias do gradcheck dependem disso.

Operações que só envolvem constantes não constroem grafo.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, NamedTuple, Sequence

import numpy as np

from core.constants import (
    GRADCHECK_ATOL,
    GRADCHECK_EPS,
    GRADCHECK_H,
    GRADCHECK_TOL,
    LAYER_NORM_EPS,
)
from core.errors import NumericsError

log = logging.getLogger(__name__)

GradFn = Callable[[np.ndarray], np.ndarray]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Soma `grad` nos eixos que foram expandidos por broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, *links: tuple[Tensor, GradFn]) -> Tensor:
    out = Tensor(data)
    live = tuple((p, fn) for p, fn in links if p.requires_grad)
    if live:
        out._parents = live
        out.requires_grad = True
    return out


class Tensor:
    """Valor float64 com registo das operações que o produziram."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents")
    __array_priority__ = 100

    def __init__(self, data, name: str = "") -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = False
        self.name = name
        self._parents: tuple[tuple[Tensor, GradFn], ...] = ()

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.data.shape})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    # ── aritmética ─────────────────────────────────────────────────────────

    def __add__(self, other) -> Tensor:
        other = _lift(other)
        return _node(
            self.data + other.data,
            (self, lambda g: _unbroadcast(g, self.data.shape)),
            (other, lambda g: _unbroadcast(g, other.data.shape)),
        )

    __radd__ = __add__

    def __sub__(self, other) -> Tensor:
        other = _lift(other)
        return _node(
            self.data - other.data,
            (self, lambda g: _unbroadcast(g, self.data.shape)),
            (other, lambda g: _unbroadcast(-g, other.data.shape)),
        )

    def __rsub__(self, other) -> Tensor:
        return _lift(other) - self

    def __mul__(self, other) -> Tensor:
        other = _lift(other)
        return _node(
            self.data * other.data,
            (self, lambda g: _unbroadcast(g * other.data, self.data.shape)),
            (other, lambda g: _unbroadcast(g * self.data, other.data.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> Tensor:
        other = _lift(other)
        return _node(
            self.data / other.data,
            (self, lambda g: _unbroadcast(g / other.data, self.data.shape)),
            (
                other,
                lambda g: _unbroadcast(
                    -g * self.data / (other.data * other.data), other.data.shape
                ),
            ),
        )

    def __rtruediv__(self, other) -> Tensor:
        return _lift(other) / self

    def __neg__(self) -> Tensor:
        return _node(-self.data, (self, lambda g: -g))

    def __pow__(self, exponent: float) -> Tensor:
        p = float(exponent)
        return _node(
            self.data**p, (self, lambda g: g * p * self.data ** (p - 1.0))
        )

    def __matmul__(self, other) -> Tensor:
        other = _lift(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise NumericsError("matmul requer matrizes 2D")
        return _node(
            self.data @ other.data,
            (self, lambda g: g @ other.data.T),
            (other, lambda g: self.data.T @ g),
        )

    # ── forma ──────────────────────────────────────────────────────────────

    @property
    def T(self) -> Tensor:
        return _node(self.data.T, (self, lambda g: g.T))

    def reshape(self, *shape) -> Tensor:
        orig = self.data.shape
        return _node(self.data.reshape(*shape), (self, lambda g: g.reshape(orig)))

    def __getitem__(self, idx) -> Tensor:
        def back(g: np.ndarray) -> np.ndarray:
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            return full

        return _node(self.data[idx], (self, back))

    # ── reduções ───────────────────────────────────────────────────────────

    def sum(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        shape = self.data.shape

        def back(g: np.ndarray) -> np.ndarray:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return np.broadcast_to(g, shape).copy()

        return _node(self.data.sum(axis=axis, keepdims=keepdims), (self, back))

    def mean(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # ── elementares ────────────────────────────────────────────────────────

    def exp(self) -> Tensor:
        out = np.exp(self.data)
        return _node(out, (self, lambda g: g * out))

    def log(self) -> Tensor:
        return _node(np.log(self.data), (self, lambda g: g / self.data))

    def tanh(self) -> Tensor:
        out = np.tanh(self.data)
        return _node(out, (self, lambda g: g * (1.0 - out * out)))

    # ── backward ───────────────────────────────────────────────────────────

    def backward(self) -> None:
        """Propaga d(self)/d(folha) para todas as folhas com gradiente."""
        if self.data.size != 1:
            raise NumericsError("backward() requer um tensor escalar")
        if not self.requires_grad:
            return
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        pending: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, fn in node._parents:
                pg = fn(g)
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg


class Parameter(Tensor):
    """Folha treinável; `name` identifica-a nos relatórios e no state dict."""

    __slots__ = ()

    def __init__(self, value, identifier: str) -> None:
        super().__init__(np.array(value, dtype=np.float64, copy=True), identifier)
        self.data = np.ascontiguousarray(self.data)
        self.requires_grad = True

    def zero_grad(self) -> None:
        self.grad = None


# ---------------------------------------------------------------------------
# Funções
# ---------------------------------------------------------------------------


def _sigmoid_array(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x):
    """Sigmoide estável. Aceita `Tensor` (devolve `Tensor`) ou reais."""
    if isinstance(x, Tensor):
        out = _sigmoid_array(np.atleast_1d(x.data)).reshape(x.data.shape)
        return _node(out, (x, lambda g: g * out * (1.0 - out)))
    arr = np.asarray(x, dtype=np.float64)
    out = _sigmoid_array(np.atleast_1d(arr)).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), estável para |x| grande."""
    gate = _sigmoid_array(np.atleast_1d(x.data)).reshape(x.data.shape)
    return _node(np.logaddexp(0.0, x.data), (x, lambda g: g * gate))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """GELU na aproximação tanh."""
    d = x.data
    u = _GELU_C * (d + 0.044715 * d**3)
    t = np.tanh(u)
    out = 0.5 * d * (1.0 + t)
    deriv = 0.5 * (1.0 + t) + 0.5 * d * (1.0 - t * t) * _GELU_C * (
        1.0 + 3 * 0.044715 * d * d
    )
    return _node(out, (x, lambda g: g * deriv))


def minimum(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    mask = a.data <= b.data
    return _node(
        np.where(mask, a.data, b.data),
        (a, lambda g: _unbroadcast(g * mask, a.data.shape)),
        (b, lambda g: _unbroadcast(g * ~mask, b.data.shape)),
    )


def maximum(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    mask = a.data >= b.data
    return _node(
        np.where(mask, a.data, b.data),
        (a, lambda g: _unbroadcast(g * mask, a.data.shape)),
        (b, lambda g: _unbroadcast(g * ~mask, b.data.shape)),
    )


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    data = np.concatenate([t.data for t in tensors], axis=axis)

    def piece(k: int) -> GradFn:
        return lambda g: np.split(g, cuts, axis=axis)[k]

    return _node(data, *((t, piece(k)) for k, t in enumerate(tensors)))


def logsumexp(x: Tensor) -> Tensor:
    """log Σ exp(x) sobre um vector."""
    m = float(np.max(x.data))
    shifted = np.exp(x.data - m)
    total = shifted.sum()
    weights = shifted / total
    return _node(np.log(total) + m, (x, lambda g: g * weights))


def softmax_rows(m) -> Tensor:
    """Softmax por linha, estabilizada por subtracção do máximo da linha."""
    m = _lift(m)
    if not np.all(np.isfinite(m.data)):
        raise NumericsError("softmax_rows: entrada não-finita")
    shifted = np.exp(m.data - m.data.max(axis=-1, keepdims=True))
    out = shifted / shifted.sum(axis=-1, keepdims=True)

    def back(g: np.ndarray) -> np.ndarray:
        return out * (g - (g * out).sum(axis=-1, keepdims=True))

    return _node(out, (m, back))


def layer_norm(v, gain, bias, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normaliza o último eixo para média 0 / variância 1, depois aplica gain/bias."""
    v, gain, bias = _lift(v), _lift(gain), _lift(bias)
    n = v.data.shape[-1]
    if n < 2:
        raise NumericsError("layer_norm: comprimento < 2")
    if gain.data.shape != (n,) or bias.data.shape != (n,):
        raise NumericsError(
            f"layer_norm: gain/bias {gain.data.shape}/{bias.data.shape} "
            f"incompatíveis com comprimento {n}"
        )
    centered = v - v.mean(axis=-1, keepdims=True)
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered * (var + eps) ** -0.5 * gain + bias


def max_pool_pairs(x: Tensor) -> Tensor:
    """Max-pool temporal (janela 2, stride 2); comprimento ⌈T/2⌉."""
    t = x.data.shape[0]
    n = (t + 1) // 2
    idx_a = 2 * np.arange(n)
    idx_b = np.minimum(idx_a + 1, t - 1)
    a, b = x.data[idx_a], x.data[idx_b]
    pick_a = a >= b

    def back(g: np.ndarray) -> np.ndarray:
        full = np.zeros_like(x.data)
        np.add.at(full, idx_a, g * pick_a)
        np.add.at(full, idx_b, g * ~pick_a)
        return full

    return _node(np.where(pick_a, a, b), (x, back))


def conv1d_same(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Convolução temporal com padding 'same'.

    `weight` tem forma (k·C_in, C_out): as k janelas deslocadas de `x` são
    concatenadas no eixo dos canais e multiplicadas de uma vez.
    """
    t, c_in = x.data.shape
    k = weight.data.shape[0] // c_in
    if k * c_in != weight.data.shape[0] or k % 2 == 0:
        raise NumericsError(f"conv1d: peso {weight.data.shape} incompatível")
    pad = Tensor(np.zeros((k // 2, c_in)))
    padded = concat([pad, x, pad], axis=0)
    cols = concat([padded[i : i + t] for i in range(k)], axis=1)
    return cols @ weight + bias


# ---------------------------------------------------------------------------
# Gradcheck
# ---------------------------------------------------------------------------


class GradCheckReport(NamedTuple):
    parameter: str
    max_rel_error: float
    analytic: float  # valores da pior entrada
    numeric: float
    index: tuple[int, ...]
    max_abs_error: float
    entries: int
    failures: int = 0  # entradas com rel >= tol e abs >= atol

    def passed(self) -> bool:
        return self.failures == 0


def relative_error(a: float, n: float, eps: float = GRADCHECK_EPS) -> float:
    return abs(a - n) / max(abs(a), abs(n), eps)


def finite_difference_gradcheck(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    h: float = GRADCHECK_H,
    *,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
    tol: float = GRADCHECK_TOL,
    atol: float = GRADCHECK_ATOL,
) -> list[GradCheckReport]:
    """Compara gradientes analíticos com diferenças centrais, entrada a entrada.

    `loss_fn` tem de ser determinística e recalcular tudo a partir dos
    parâmetros (é avaliada 2× por entrada). Com `max_entries`, cada parâmetro
    é amostrado em até N entradas (escolhidas com `rng`).
    """
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {
        id(p): (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for p in params
    }
    for p in params:
        p.zero_grad()

    rng = rng or np.random.default_rng(0)
    reports: list[GradCheckReport] = []
    for p in params:
        flat = p.data.reshape(-1)
        grad = analytic[id(p)].reshape(-1)
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        # pior entrada: a que falha o critério, e entre essas a de maior erro
        worst = (-1.0, 0.0, 0.0, 0.0, 0)
        worst_fail = False
        max_abs = 0.0
        failures = 0
        for k in indices:
            orig = flat[k]
            flat[k] = orig + h
            f_plus = float(loss_fn().data)
            flat[k] = orig - h
            f_minus = float(loss_fn().data)
            flat[k] = orig
            num = (f_plus - f_minus) / (2.0 * h)
            ana = float(grad[k])
            rel = relative_error(ana, num)
            abs_err = abs(ana - num)
            max_abs = max(max_abs, abs_err)
            fails = rel >= tol and abs_err >= atol
            failures += fails
            if (fails, rel) > (worst_fail, worst[0]):
                worst_fail = fails
                worst = (rel, ana, num, abs_err, int(k))
        rel, ana, num, abs_err, k = worst
        index = tuple(int(i) for i in np.unravel_index(k, p.data.shape))
        reports.append(
            GradCheckReport(
                parameter=p.name,
                max_rel_error=max(rel, 0.0),
                analytic=ana,
                numeric=num,
                index=index,
                max_abs_error=max_abs,
                entries=len(indices),
                failures=failures,
            )
        )
        log.debug("gradcheck %s: rel=%.3e abs=%.3e", p.name, rel, abs_err)
    return reports


__all__ = [
    "GradCheckReport",
    "Parameter",
    "Tensor",
    "concat",
    "conv1d_same",
    "finite_difference_gradcheck",
    "gelu",
    "layer_norm",
    "logsumexp",
    "max_pool_pairs",
    "maximum",
    "minimum",
    "relative_error",
    "sigmoid",
    "softmax_rows",
    "softplus",
]
