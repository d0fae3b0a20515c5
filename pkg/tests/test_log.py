import io
import sys

import structlog

from app.log import configure_logging


def test_output_follows_the_current_stderr(monkeypatch, capsys):
    with monkeypatch.context() as m:
        stream = io.StringIO()
        m.setattr(sys, "stderr", stream)
        configure_logging()
        structlog.get_logger("idfabric.test").info("while_replaced")
        assert "event='while_replaced'" in stream.getvalue()
        stream.close()

    structlog.get_logger("idfabric.test").info("after_close", person_id="e1")
    err = capsys.readouterr().err
    assert "event='after_close'" in err
    assert "person_id='e1'" in err


def test_verbose_enables_debug(capsys):
    configure_logging()
    structlog.get_logger("idfabric.test").debug("hidden")
    assert capsys.readouterr().err == ""
    configure_logging(verbose=True)
    structlog.get_logger("idfabric.test").debug("shown")
    assert "level='debug'" in capsys.readouterr().err
