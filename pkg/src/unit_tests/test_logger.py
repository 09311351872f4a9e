import logging

import pytest

from ..logger.logger import LogFileHandler, Logger, LoggerManager, TempColorFormatter


@pytest.fixture
def manager():
    manager = LoggerManager()
    yield manager
    manager.setLevelForAll(logging.INFO)


class TestLoggerManager:
    def test_same_name_same_logger(self, manager):
        """
        getLogger returns one shared Logger per name
        """
        assert manager.getLogger("TestSame") is manager.getLogger("TestSame")
        assert manager.getLogger("TestSame") is not manager.getLogger("TestOther")

    def test_set_level_for_all_applies_to_new_loggers(self, manager):
        """
        Levels set for all loggers also hold for loggers created afterwards
        """
        existing = manager.getLogger("TestLevelExisting")
        manager.setLevelForAll(logging.WARNING)
        created = manager.getLogger("TestLevelCreatedLater")
        assert existing.logger.level == logging.WARNING
        assert created.logger.level == logging.WARNING

    def test_deactivate_silences_logger(self, manager, caplog):
        logger = manager.getLogger("TestDeactivate")
        manager.deactivate("TestDeactivate")
        with caplog.at_level(logging.INFO, logger="TestDeactivate"):
            logger.info("hidden")
        manager.activate("TestDeactivate")
        with caplog.at_level(logging.INFO, logger="TestDeactivate"):
            logger.info("shown")
        messages = [record.getMessage() for record in caplog.records]
        assert "hidden" not in messages
        assert "shown" in messages


class TestLogger:
    def test_messages_reach_logging(self, caplog):
        logger = Logger("TestMessages")
        with caplog.at_level(logging.DEBUG, logger="TestMessages"):
            logger.logger.setLevel(logging.DEBUG)
            logger.debug("d")
            logger.warning("w", color="bold_yellow")
        levels = [(record.levelname, record.getMessage()) for record in caplog.records]
        assert ("DEBUG", "d") in levels
        assert ("WARNING", "w") in levels

    def test_delimiter_with_text(self, caplog):
        """
        A delimiter with text prints line, text, line
        """
        logger = Logger("TestDelimiter")
        with caplog.at_level(logging.INFO, logger="TestDelimiter"):
            logger.delimiter(size=5, text="STAGE")
        assert [record.getMessage() for record in caplog.records] == ["=====", "STAGE", "====="]

    def test_temp_color_restored(self):
        """
        A per-record colour override does not leak into later records
        """
        formatter = TempColorFormatter("%(log_color)s%(message)s", log_colors={"INFO": "green"})
        record = logging.LogRecord("x", logging.INFO, __file__, 1, "msg", None, None)
        record.temp_log_color = "red"
        formatter.format(record)
        assert formatter.log_colors["INFO"] == "green"
        assert "message" not in formatter.log_colors


def test_log_file_handler_adds_timestamp(tmp_path):
    handler = LogFileHandler(str(tmp_path / "logs" / "run.log"))
    try:
        name = handler.baseFilename
        assert "run_" in name and name.endswith(".log")
        assert (tmp_path / "logs").is_dir()
    finally:
        handler.close()
