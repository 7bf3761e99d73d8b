"""
config.py: configuração centralizada do toolkit ASL
====================================================
Único sítio que lê variáveis de ambiente. Os comandos chamam
`configure_logging()` e `configure_sentry()` ao arrancar.
"""

import json
import logging
import os
import sys

# ── Ambiente ────────────────────────────────────────────────────────────────
ENV = os.environ.get("ASL_ENV", "development").lower()
is_production: bool = ENV == "production"

LOG_LEVEL: str = os.environ.get("ASL_LOG_LEVEL", "INFO").upper()

# ── Observabilidade (Sentry) ─────────────────────────────────────────────────
# Vazio = desligado (no-op completo).
SENTRY_DSN: str = os.environ.get("SENTRY_DSN", "").strip()
SENTRY_TRACES_SAMPLE_RATE: float = float(
    os.environ.get("SENTRY_TRACES_SAMPLE_RATE", "0.0")
)
SENTRY_RELEASE: str = os.environ.get("SENTRY_RELEASE", "").strip()


# ── Logging ──────────────────────────────────────────────────────────────────
_run_id = "-"


def set_run_id(run_id: str) -> None:
    """Identificador do comando em curso (`<comando>-<seed>`), posto em cada log."""
    global _run_id
    _run_id = run_id or "-"


def get_run_id() -> str:
    return _run_id


class RunContextFilter(logging.Filter):
    """Injeta `run_id` em todos os records."""

    def filter(self, record: logging.LogRecord) -> bool:
        if not hasattr(record, "run_id"):
            record.run_id = _run_id  # type: ignore[attr-defined]
        return True


class JsonFormatter(logging.Formatter):
    """Uma linha JSON por log entry."""

    def format(self, record: logging.LogRecord) -> str:
        entry = {
            "ts": self.formatTime(record, self.datefmt),
            "level": record.levelname,
            "logger": record.name,
            "msg": record.getMessage(),
            "run_id": getattr(record, "run_id", "-"),
        }
        if record.exc_info and record.exc_info[0] is not None:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry, ensure_ascii=False)


class DevFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        if not hasattr(record, "run_id"):
            record.run_id = "-"  # type: ignore[attr-defined]
        return super().format(record)


_HANDLER_MARK = "_asl_handler"


def configure_logging(logger: logging.Logger | None = None, level: str | None = None) -> None:
    """JSON em produção, legível em dev. Idempotente."""
    logger = logger or logging.getLogger()
    for h in list(logger.handlers):
        if getattr(h, _HANDLER_MARK, False):
            logger.removeHandler(h)

    handler = logging.StreamHandler(sys.stderr)
    setattr(handler, _HANDLER_MARK, True)
    handler.addFilter(RunContextFilter())
    if is_production:
        handler.setFormatter(JsonFormatter(datefmt="%Y-%m-%dT%H:%M:%S"))
    else:
        handler.setFormatter(
            DevFormatter(
                "%(asctime)s %(levelname)s [%(name)s] [%(run_id)s]: %(message)s",
                datefmt="%Y-%m-%d %H:%M:%S",
            )
        )
    logger.addHandler(handler)
    logger.setLevel(level or LOG_LEVEL)


# ── Sentry (error tracking) ──────────────────────────────────────────────────
def _scrub_event(event, _hint):
    """before_send: remove caminhos locais dos extras (podem conter o utilizador)."""
    try:
        extras = event.get("extra") or {}
        for key in list(extras):
            if key.endswith(("path", "dir")):
                extras[key] = "[Filtered]"
    except Exception:
        pass
    return event


def configure_sentry() -> bool:
    """Inicializa Sentry se SENTRY_DSN estiver definido. No-op caso contrário.

    Returns:
        True se o Sentry foi activado, False caso contrário.
    """
    if not SENTRY_DSN:
        return False
    try:
        import sentry_sdk
        from sentry_sdk.integrations.logging import LoggingIntegration

        sentry_sdk.init(
            dsn=SENTRY_DSN,
            environment=ENV,
            release=SENTRY_RELEASE or None,
            traces_sample_rate=SENTRY_TRACES_SAMPLE_RATE,
            send_default_pii=False,
            integrations=[
                # ERROR e acima vão como events; INFO como breadcrumbs.
                LoggingIntegration(level=logging.INFO, event_level=logging.ERROR),
            ],
            before_send=_scrub_event,
        )
        return True
    except Exception as exc:  # noqa: BLE001
        logging.getLogger(__name__).warning(
            "Sentry init falhou (continuando sem error tracking): %s", exc
        )
        return False
