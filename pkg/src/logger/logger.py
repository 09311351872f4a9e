from datetime import datetime
from functools import partialmethod
from pathlib import Path
from typing import Dict, Literal, Optional
import logging

from ..singleton.singleton import SingletonMeta
import colorlog


LOG_COLORS = Literal[
    "black", "red", "green", "yellow", "blue", "purple", "cyan", "white",
    "light_cyan", "light_yellow", "bold_red", "bold_yellow", "bold_green", "bold_white",
]

LEVEL_COLORS = {
    "DEBUG": "cyan",
    "INFO": "green",
    "WARNING": "yellow",
    "ERROR": "red",
    "CRITICAL": "bold_red",
}


class LogFileHandler(logging.FileHandler):
    """
    A file handler whose file name carries the start timestamp, so repeated
    pipeline runs never overwrite each other's logs.
    """

    def __init__(self, full_path: str, level: int = logging.NOTSET) -> None:
        file_path = Path(full_path)

        timestamp = datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
        filename_with_timestamp = f"{file_path.stem}_{timestamp}{file_path.suffix}"

        final_path = file_path.parent / filename_with_timestamp
        final_path.parent.mkdir(parents=True, exist_ok=True)

        super().__init__(final_path, encoding="utf-8")
        self.setLevel(level)
        self.setFormatter(
            logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        )


class TempColorFormatter(colorlog.ColoredFormatter):
    """Colored formatter that honours a per-record `temp_log_color` override."""

    def format(self, record):
        temp_color = getattr(record, "temp_log_color", None)
        if not temp_color:
            return super().format(record)

        original_level_color = self.log_colors.get(record.levelname)
        original_message_color = self.log_colors.get("message")
        self.log_colors[record.levelname] = temp_color
        self.log_colors["message"] = temp_color
        try:
            return super().format(record)
        finally:
            if original_level_color:
                self.log_colors[record.levelname] = original_level_color
            else:
                self.log_colors.pop(record.levelname, None)
            if original_message_color:
                self.log_colors["message"] = original_message_color
            else:
                self.log_colors.pop("message", None)


class Logger:
    active = False

    def __init__(self, name: str, level: int = logging.INFO):
        self.active = True
        self.logger = logging.getLogger(name)
        self.logger.setLevel(level)

        console_handler = logging.StreamHandler()
        self.formatter = TempColorFormatter(
            "%(time_log_color)s%(asctime)s%(reset)s %(light_cyan)s|%(reset)s "
            "%(module_log_color)s%(name)s%(reset)s %(light_cyan)s|%(reset)s "
            "%(level_log_color)s%(levelname)s%(reset)s %(light_cyan)s|%(reset)s "
            "%(log_color)s%(message)s%(reset)s",
            log_colors=dict(LEVEL_COLORS),
            secondary_log_colors={
                "level": dict(LEVEL_COLORS),
                "time": {level_name: "blue" for level_name in LEVEL_COLORS},
                "module": {level_name: "light_cyan" for level_name in LEVEL_COLORS},
            },
            style="%",
            datefmt="%Y-%m-%d %H:%M:%S",
        )
        console_handler.setFormatter(self.formatter)
        self.logger.addHandler(console_handler)

    def activate(self):
        self.active = True

    def deactivate(self):
        self.active = False

    def log(self, level: int, msg: str, color: Optional[LOG_COLORS] = None):
        """Drops the record while deactivated; `color` recolours this record only."""
        if not self.active:
            return
        extra = {"temp_log_color": color} if color else None
        self.logger.log(level, msg, extra=extra)

    debug = partialmethod(log, logging.DEBUG)
    info = partialmethod(log, logging.INFO)
    warning = partialmethod(log, logging.WARNING)
    error = partialmethod(log, logging.ERROR)
    critical = partialmethod(log, logging.CRITICAL)

    def delimiter(self, size: int = 100, color: LOG_COLORS = "white", text: str = ""):
        if not self.active:
            return

        line = "=" * size
        self.info(line, color)
        if text:
            self.info(text, color)
            self.info(line, color)


class LoggerManager(metaclass=SingletonMeta):
    """
    Creates and configures every logger of the application.
    """

    def __init__(self):
        self._loggers: Dict[str, Logger] = {}
        self._level = logging.INFO
        self._file_handler: Optional[logging.Handler] = None

    def getLogger(self, name: str) -> Logger:
        """
        Returns the logger registered under `name`, creating it on first use.
        """
        if name not in self._loggers:
            logger = Logger(name, self._level)
            if self._file_handler is not None:
                logger.logger.addHandler(self._file_handler)
            self._loggers[name] = logger

        return self._loggers[name]

    def setLevelForAll(self, level: int):
        """
        Sets the level of all existing loggers and of the ones created later.
        """
        self._level = level
        for logger_obj in self._loggers.values():
            logger_obj.logger.setLevel(level)

    def setLevelFor(self, name: str, level: int):
        if name in self._loggers:
            self._loggers[name].logger.setLevel(level)

    def attachFile(self, full_path: str):
        """
        Mirrors every logger (present and future) into one timestamped file.
        """
        if self._file_handler is not None:
            return
        self._file_handler = LogFileHandler(full_path)
        for logger_obj in self._loggers.values():
            logger_obj.logger.addHandler(self._file_handler)

    def activate(self, name: str):
        if name in self._loggers:
            self._loggers[name].activate()

    def deactivate(self, name: str):
        if name in self._loggers:
            self._loggers[name].deactivate()
