"""
tests/test_config.py — Testes para config.py
============================================
Logging (formatters, run_id, idempotência) e Sentry opt-in.
"""

import json
import logging
import sys

import pytest

import config as cfg


def _marked_handlers(logger):
    return [h for h in logger.handlers if getattr(h, "_asl_handler", False)]


def _record(msg="hello world", **extra):
    record = logging.LogRecord(
        name="test", level=logging.INFO, pathname="", lineno=0, msg=msg, args=(), exc_info=None
    )
    for key, value in extra.items():
        setattr(record, key, value)
    return record


@pytest.fixture
def logger():
    lg = logging.getLogger("test_config_logger")
    lg.handlers.clear()
    yield lg
    lg.handlers.clear()


@pytest.fixture(autouse=True)
def _reset_run_id():
    yield
    cfg.set_run_id("")


# ── JsonFormatter ─────────────────────────────────────────────────────────────


def test_json_formatter_basic():
    data = json.loads(cfg.JsonFormatter().format(_record(run_id="train-0")))
    assert data["level"] == "INFO"
    assert data["logger"] == "test"
    assert data["msg"] == "hello world"
    assert data["run_id"] == "train-0"
    assert "ts" in data
    assert "exception" not in data


def test_json_formatter_with_exception():
    try:
        raise ValueError("boom")
    except ValueError:
        record = _record("falhou")
        record.exc_info = sys.exc_info()
    data = json.loads(cfg.JsonFormatter().format(record))
    assert "ValueError: boom" in data["exception"]


def test_json_formatter_keeps_unicode():
    line = cfg.JsonFormatter().format(_record("época concluída"))
    assert "época concluída" in line


# ── configure_logging ─────────────────────────────────────────────────────────


def test_configure_logging_production_uses_json(monkeypatch, logger):
    monkeypatch.setattr(cfg, "is_production", True)
    cfg.configure_logging(logger)
    (handler,) = _marked_handlers(logger)
    assert isinstance(handler.formatter, cfg.JsonFormatter)


def test_configure_logging_dev_uses_readable_format(monkeypatch, logger):
    monkeypatch.setattr(cfg, "is_production", False)
    cfg.configure_logging(logger)
    (handler,) = _marked_handlers(logger)
    assert isinstance(handler.formatter, cfg.DevFormatter)
    assert handler.stream is sys.stderr


def test_configure_logging_is_idempotent(logger):
    cfg.configure_logging(logger)
    cfg.configure_logging(logger)
    cfg.configure_logging(logger)
    assert len(_marked_handlers(logger)) == 1


def test_configure_logging_keeps_foreign_handlers(logger):
    other = logging.NullHandler()
    logger.addHandler(other)
    cfg.configure_logging(logger)
    assert other in logger.handlers


def test_configure_logging_level(monkeypatch, logger):
    cfg.configure_logging(logger, level="DEBUG")
    assert logger.level == logging.DEBUG
    monkeypatch.setattr(cfg, "LOG_LEVEL", "WARNING")
    cfg.configure_logging(logger)
    assert logger.level == logging.WARNING


def test_dev_formatter_without_run_id():
    fmt = cfg.DevFormatter("[%(run_id)s] %(message)s")
    assert fmt.format(_record("x")) == "[-] x"


# ── run_id ────────────────────────────────────────────────────────────────────


def test_run_context_filter_injects_current_run_id():
    cfg.set_run_id("gradcheck-3")
    record = _record()
    assert cfg.RunContextFilter().filter(record) is True
    assert record.run_id == "gradcheck-3"


def test_run_context_filter_keeps_explicit_run_id():
    cfg.set_run_id("train-0")
    record = _record(run_id="ablate-1")
    cfg.RunContextFilter().filter(record)
    assert record.run_id == "ablate-1"


def test_set_run_id_empty_resets():
    cfg.set_run_id("infer-0")
    assert cfg.get_run_id() == "infer-0"
    cfg.set_run_id("")
    assert cfg.get_run_id() == "-"


def test_handler_output_carries_run_id(monkeypatch, logger, capsys):
    monkeypatch.setattr(cfg, "is_production", True)
    cfg.configure_logging(logger, level="INFO")
    cfg.set_run_id("eval-0")
    logger.info("mAP calculado")
    line = capsys.readouterr().err.strip().splitlines()[-1]
    data = json.loads(line)
    assert data["run_id"] == "eval-0"
    assert data["msg"] == "mAP calculado"


# ── Sentry ────────────────────────────────────────────────────────────────────


class TestConfigureSentry:
    def test_no_op_quando_dsn_vazio(self, monkeypatch):
        monkeypatch.setattr(cfg, "SENTRY_DSN", "")
        assert cfg.configure_sentry() is False

    def test_init_com_dsn_valido(self, monkeypatch):
        sentry_sdk = pytest.importorskip("sentry_sdk")
        monkeypatch.setattr(cfg, "SENTRY_DSN", "https://abc123@o0.ingest.sentry.io/0")
        try:
            assert cfg.configure_sentry() is True
        finally:
            client = sentry_sdk.get_client()
            if client is not None and hasattr(client, "close"):
                client.close()

    def test_init_dsn_invalido_nao_crasha(self, monkeypatch):
        monkeypatch.setattr(cfg, "SENTRY_DSN", "isto-não-é-um-dsn")
        assert cfg.configure_sentry() in (True, False)


class TestScrubEvent:
    def test_caminhos_filtrados(self):
        event = {"extra": {"params_path": "/home/u/run/params.npz", "out_dir": "/home/u/run", "epoch": 3}}
        out = cfg._scrub_event(event, None)
        assert out["extra"] == {"params_path": "[Filtered]", "out_dir": "[Filtered]", "epoch": 3}

    def test_evento_sem_extra(self):
        event = {"message": "x"}
        assert cfg._scrub_event(event, None) == {"message": "x"}

    def test_nunca_crasha(self):
        event = {"extra": "não é um dict"}
        assert cfg._scrub_event(event, None) is event
