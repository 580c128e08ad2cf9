import logging
import os
from typing import Optional

LOG_ENV_VAR = "PARACHUTE_LOG"
_LEVELS = {
    "error": logging.ERROR,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def configure_logging(level: Optional[str] = None) -> logging.Logger:
    """Install a stderr handler on the ``parachute`` logger.

    Args:
        level: One of ``error``, ``info`` or ``debug``. Falls back to the
            ``PARACHUTE_LOG`` environment variable, then to ``error``.

    Returns:
        The configured package logger.
    """
    name = (level or os.environ.get(LOG_ENV_VAR) or "error").lower()
    if name not in _LEVELS:
        raise ValueError(
            f"Invalid log level: {name}. Must be one of {', '.join(_LEVELS)}"
        )
    logger = logging.getLogger("parachute")
    logger.setLevel(_LEVELS[name])
    if not any(getattr(h, "_parachute", False) for h in logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        handler._parachute = True
        logger.addHandler(handler)
    return logger
