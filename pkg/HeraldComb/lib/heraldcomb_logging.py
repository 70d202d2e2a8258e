# HeraldComb: runs in a standard CPython 3.9+ environment.
"""
Centralized logging configuration for HeraldComb.

Library modules only ask for named loggers under the ``HeraldComb`` root;
handlers are attached once, by the command-line entry point.
"""

import logging
import os
import sys

ROOT_LOGGER_NAME = 'HeraldComb'
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_FILE_NAME = 'heraldcomb.log'

_TRUE_VALUES = ('1', 'true', 'yes', 'on')


def default_log_dir():
    """Log directory from HERALDCOMB_LOG_DIR, else ~/Documents/HeraldComb/logs."""
    env_dir = os.environ.get('HERALDCOMB_LOG_DIR')
    if env_dir:
        return env_dir
    return os.path.join(os.path.expanduser("~/Documents"), 'HeraldComb', 'logs')


def debug_mode_from_env():
    return os.environ.get('HERALDCOMB_DEBUG', 'false').strip().lower() in _TRUE_VALUES


def get_logger(component):
    """Return the logger of one component, e.g. ``get_logger('Correlator')``."""
    return logging.getLogger('{}.{}'.format(ROOT_LOGGER_NAME, component))


def configure_logging(debug_mode=None, log_dir=None):
    """Attach the file (and in debug mode console) handlers to the root logger.

    Safe to call more than once; previous HeraldComb handlers are replaced.

    Args:
        debug_mode (bool, optional): Force debug mode. Defaults to HERALDCOMB_DEBUG.
        log_dir (str, optional): Override the log directory.

    Returns:
        str | None: Path of the log file, or None when it could not be opened.
    """
    if debug_mode is None:
        debug_mode = debug_mode_from_env()
    log_dir = log_dir or default_log_dir()

    logger = logging.getLogger(ROOT_LOGGER_NAME)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.setLevel(logging.DEBUG if debug_mode else logging.INFO)
    logger.propagate = False
    formatter = logging.Formatter(LOG_FORMAT)

    log_file = None
    try:
        os.makedirs(log_dir, exist_ok=True)
        log_file = os.path.join(log_dir, LOG_FILE_NAME)
        file_handler = logging.FileHandler(log_file, mode='a', encoding='utf-8')
        file_handler.setLevel(logging.DEBUG if debug_mode else logging.INFO)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    except OSError as e:
        log_file = None
        print("HeraldComb: could not open log directory '{}': {}".format(log_dir, e), file=sys.stderr)

    if debug_mode:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(logging.DEBUG)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)
        logger.info("HeraldComb logger: configured for DEBUG mode (file and console).")
    else:
        logger.info("HeraldComb logger: configured for INFO mode (file only).")
    return log_file
