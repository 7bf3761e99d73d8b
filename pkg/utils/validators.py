"""Validadores de input para ficheiros de configuração JSON e flags da CLI.

Convenção: tudo o que falha levanta `ConfigError` com o nome da chave.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Any, TypeVar

from core.errors import ConfigError

T = TypeVar("T")


def _val_scalar(key: str, value: Any, default: Any) -> Any:
    """Valida o tipo de `value` contra o default do campo."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: esperado booleano")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: esperado inteiro")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: esperado número")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: esperado texto")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{key}: esperada uma lista")
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            raise ConfigError(f"{key}: lista só pode ter números")
        return tuple(value)
    return value


def build_config(cls: type[T], raw: Any, **overrides: Any) -> T:
    """Constrói a dataclass `cls` a partir de um dict JSON, sem chaves desconhecidas."""
    if not isinstance(raw, dict):
        raise ConfigError("configuração tem de ser um objecto JSON")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"chave(s) desconhecida(s): {', '.join(unknown)}")
    values: dict[str, Any] = {}
    for name, value in {**raw, **overrides}.items():
        f = fields[name]
        if f.default is not dataclasses.MISSING:
            default = f.default
        elif f.default_factory is not dataclasses.MISSING:
            default = f.default_factory()
        else:
            default = 0  # obrigatórios são inteiros (seed)
        values[name] = _val_scalar(name, value, default)
    missing = [
        n
        for n, f in fields.items()
        if n not in values
        and f.default is dataclasses.MISSING
        and f.default_factory is dataclasses.MISSING
    ]
    if missing:
        raise ConfigError(f"chave(s) obrigatória(s) em falta: {', '.join(missing)}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_json_config(path: str | Path, cls: type[T], **overrides: Any) -> T:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: JSON inválido na posição {exc.pos} ({exc.msg})") from exc
    return build_config(cls, raw, **overrides)


def parse_thresholds(raw: str) -> tuple[float, ...]:
    """`lo:step:hi` (inclusivo) ou lista separada por vírgulas."""
    raw = (raw or "").strip()
    try:
        if ":" in raw:
            lo, step, hi = (float(p) for p in raw.split(":"))
            if step <= 0 or hi < lo:
                raise ConfigError(f"thresholds {raw!r}: passo ≤ 0 ou intervalo vazio")
            count = int(math.floor((hi - lo) / step + 1e-9)) + 1
            values = tuple(round(lo + k * step, 10) for k in range(count))
        else:
            values = tuple(float(p) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"thresholds {raw!r}: formato inválido") from exc
    if not values:
        raise ConfigError("thresholds: lista vazia")
    return values


def parse_seeds(raw: str) -> tuple[int, ...]:
    """`0,1,2` ou `0-4`."""
    raw = (raw or "").strip()
    try:
        if "-" in raw and "," not in raw:
            lo, hi = (int(p) for p in raw.split("-"))
            seeds = tuple(range(lo, hi + 1))
        else:
            seeds = tuple(int(p) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"seeds {raw!r}: formato inválido") from exc
    if not seeds:
        raise ConfigError("seeds: lista vazia")
    return seeds


__all__ = ["build_config", "load_json_config", "parse_seeds", "parse_thresholds"]
