"""Notificações de eventos operacionais (divergência do treino, gradcheck falhado).

Backend selecionado por env var `ASL_NOTIFY_BACKEND` (default: `none`):

  - `none` / vazio: silencioso.
  - `stdout`: uma linha `[SEVERIDADE] título: mensagem (run_id)`.
  - `webhook`: POST JSON para `ASL_NOTIFY_WEBHOOK_URL`.

Cada notificação leva o `run_id` do comando em curso (ver `config.set_run_id`).
`notify()` nunca lança; falhas do backend ficam só no log.
"""

from __future__ import annotations

import json
import logging
import os
import urllib.parse
import urllib.request
from functools import lru_cache
from typing import NamedTuple, Protocol

import config as cfg

log = logging.getLogger(__name__)

SEVERITIES = ("info", "warning", "error")


class Notification(NamedTuple):
    title: str
    message: str
    severity: str = "info"
    run_id: str = "-"


class Notifier(Protocol):
    def send(self, note: Notification) -> None: ...


class NullNotifier:
    def send(self, note: Notification) -> None:
        return None


class StdoutNotifier:
    def send(self, note: Notification) -> None:
        print(f"[{note.severity.upper()}] {note.title}: {note.message} ({note.run_id})", flush=True)


class WebhookNotifier:
    """POST de `Notification._asdict()` para um endpoint http(s)."""

    def __init__(self, url: str, timeout: float = 5.0) -> None:
        parsed = urllib.parse.urlparse(url)
        if parsed.scheme not in ("http", "https"):
            raise ValueError(f"scheme {parsed.scheme!r} não permitido (só http/https)")
        if not parsed.netloc:
            raise ValueError("URL sem host")
        self.url = url
        self.timeout = timeout

    def send(self, note: Notification) -> None:
        req = urllib.request.Request(
            self.url,
            data=json.dumps(note._asdict(), ensure_ascii=False).encode("utf-8"),
            method="POST",
            headers={"Content-Type": "application/json"},
        )
        try:
            # scheme validado no __init__
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:  # noqa: S310  # nosec B310
                if resp.status >= 300:
                    log.warning("webhook: HTTP %s para %r", resp.status, note.title)
        except Exception:
            log.exception("webhook falhou (%s)", note.title)


def _build_notifier() -> Notifier:
    backend = os.getenv("ASL_NOTIFY_BACKEND", "none").strip().lower()
    if backend in ("", "none", "off", "disabled"):
        return NullNotifier()
    if backend == "stdout":
        return StdoutNotifier()
    if backend == "webhook":
        url = os.getenv("ASL_NOTIFY_WEBHOOK_URL", "").strip()
        try:
            return WebhookNotifier(url)
        except ValueError as exc:
            log.warning("ASL_NOTIFY_WEBHOOK_URL inválido (%s); notificações desligadas.", exc)
            return NullNotifier()
    log.warning("ASL_NOTIFY_BACKEND=%s desconhecido; notificações desligadas.", backend)
    return NullNotifier()


@lru_cache(maxsize=1)
def _get_notifier() -> Notifier:
    return _build_notifier()


def notify(title: str, message: str, severity: str = "info") -> None:
    """Envia uma notificação com o run_id actual. Nunca lança."""
    if severity not in SEVERITIES:
        log.warning("severidade %r desconhecida; a usar 'error'", severity)
        severity = "error"
    try:
        _get_notifier().send(Notification(title, message, severity, cfg.get_run_id()))
    except Exception:
        log.exception("notify() falhou inesperadamente")


def reset_notifier_cache() -> None:
    _get_notifier.cache_clear()


__all__ = [
    "Notification",
    "Notifier",
    "NullNotifier",
    "StdoutNotifier",
    "WebhookNotifier",
    "notify",
    "reset_notifier_cache",
]
