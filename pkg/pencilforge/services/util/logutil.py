from typing import Any, List, Dict, Optional, Union
import logging
from logging.handlers import RotatingFileHandler
import os
from datetime import datetime

from pencilforge.models import LogEntry, LogLevelEnum


class LoggerWrapper(logging.LoggerAdapter):
    def __init__(self, logger, extra=None):
        super().__init__(logger, extra)
        self.check_log: Dict[str, List[Dict[str, Any]]] = {}

    def process(self, msg, kwargs):
        """
        Capture messages tagged with a 'check_id' so that a verification
        run can attach them to the report entry of the check that emitted them.
        """
        if "check_id" in kwargs:
            check_id = kwargs.pop("check_id")
            if check_id:
                if check_id not in self.check_log:
                    self.check_log[check_id] = []
                log_entry: LogEntry = LogEntry(
                    timestamp=datetime.now(),
                    level=kwargs.pop("level") if "level" in kwargs else None,
                    message=msg
                )
                self.check_log[check_id].append(log_entry.to_dict())
        # the 'level' key is still present when no check_id was given
        if "level" in kwargs:
            kwargs.pop("level")
        return msg, kwargs

    def get_logs(self, check_id: str) -> List[Dict[str, str]]:
        if check_id in self.check_log:
            return [
                {field: str(value) for field, value in entry.items()}
                for entry in self.check_log[check_id]
            ]
        else:
            return []

    def clear_logs(self, check_id: Optional[str] = None):
        if check_id is None:
            self.check_log.clear()
        else:
            self.check_log.pop(check_id, None)

    def _delegate(self, method, level: LogLevelEnum, msg, args, check_id, kwargs):
        kwargs["check_id"] = check_id
        kwargs["level"] = level
        msg, kwargs = self.process(msg, kwargs)
        method(msg, *args, **kwargs)

    def debug(self, msg, /, *args, check_id: Optional[str] = None, **kwargs):
        """
        Delegate a debug call to the underlying logger
        after capturing the message for later export
        """
        self._delegate(self.logger.debug, LogLevelEnum.debug, msg, args, check_id, kwargs)

    def info(self, msg, /, *args, check_id: Optional[str] = None, **kwargs):
        self._delegate(self.logger.info, LogLevelEnum.info, msg, args, check_id, kwargs)

    def warning(self, msg, /, *args, check_id: Optional[str] = None, **kwargs):
        self._delegate(self.logger.warning, LogLevelEnum.warning, msg, args, check_id, kwargs)

    def error(self, msg, /, *args, check_id: Optional[str] = None, **kwargs):
        self._delegate(self.logger.error, LogLevelEnum.error, msg, args, check_id, kwargs)

    def critical(self, msg, /, *args, check_id: Optional[str] = None, **kwargs):
        # no separate critical level in LogLevelEnum
        self._delegate(self.logger.critical, LogLevelEnum.error, msg, args, check_id, kwargs)


class LoggingUtil(object):
    """ Logging utility controlling format and setting initial logging level """

    @staticmethod
    def init_logging(
            name,
            level: Optional[Union[int, str]] = logging.INFO,
            format_sel: Optional[str] = 'medium',
            log_file_level=None
    ) -> LoggerWrapper:

        log_file_path = os.path.join(os.path.dirname(__file__), '../../logs/pencilforge.log')

        logger = logging.getLogger(name)

        # already configured by an earlier import of the same module
        if logger.handlers:
            return LoggerWrapper(logger)

        format_types = {
            "short": '[%(name)s.%(funcName)s] : %(message)s',
            "medium": '[%(name)s.%(funcName)s] - %(asctime)-15s: %(message)s',
            "long": '[%(name)s.%(funcName)s] - %(asctime)-15s %(filename)s %(levelname)s: %(message)s'
        }[format_sel or 'medium']

        formatter = logging.Formatter(format_types)

        # console output
        stream_handler = logging.StreamHandler()
        stream_handler.setFormatter(formatter)

        logger.setLevel(level or logging.INFO)

        if log_file_path is not None and os.access(os.path.dirname(log_file_path), os.W_OK):
            # rotating file handler, 1mb max per file with a max number of 10 files
            file_handler = RotatingFileHandler(filename=log_file_path, maxBytes=1000000, backupCount=10)
            file_handler.setFormatter(formatter)
            file_handler.setLevel(log_file_level or level or logging.INFO)
            logger.addHandler(file_handler)

        logger.addHandler(stream_handler)

        return LoggerWrapper(logger)
