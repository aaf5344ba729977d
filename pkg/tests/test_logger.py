"""
Testing LoggingUtil (and LoggerWrapper inside)
"""
import logging
from pencilforge.services.util.logutil import LoggerWrapper, LoggingUtil

logger = logging.getLogger()
logger.setLevel(logging.DEBUG)


def test_logger_wrapper():
    lw = LoggerWrapper(logger)
    lw.debug("Testing Logger Wrapper")


def test_logger_util():
    lu = LoggingUtil.init_logging(__name__)
    lu.debug("Testing Logging Util class")


def test_check_logs_are_captured_and_cleared():
    lw = LoggerWrapper(logger)
    lw.info("bracket computed", check_id="run-1")
    lw.warning("residual survives", check_id="run-1")
    lw.info("not captured")
    entries = lw.get_logs("run-1")
    assert [entry["message"] for entry in entries] == ["bracket computed", "residual survives"]
    assert not lw.get_logs("run-2")
    lw.clear_logs("run-1")
    assert not lw.get_logs("run-1")
