"""
Logger setup shared by all components.
"""

import logging
from pathlib import Path
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def get_logger(name: str, log_dir: Optional[Path] = None, level: int = logging.INFO) -> logging.Logger:
    """Return a named logger with exactly one handler attached.

    Args:
        name: Logger name, e.g. "nlg.seq2seq"
        log_dir: Optional directory; when given, logs go to <log_dir>/<name>.log

    Returns:
        Configured logger
    """
    logger = logging.getLogger(name)
    if not logger.handlers:
        if log_dir:
            log_dir = Path(log_dir)
            log_dir.mkdir(parents=True, exist_ok=True)
            handler = logging.FileHandler(log_dir / f"{name}.log")
        else:
            handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
        logger.setLevel(level)
    return logger
