"""
Logging helpers - bracket-tagged component loggers.
"""

import logging
import sys

from .config import get_settings

_ROOT_NAME = "forcegrasp"
_configured = False


def _configure_root():
    global _configured
    root = logging.getLogger(_ROOT_NAME)
    if not _configured:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("[%(tag)s] %(message)s"))
        root.addHandler(handler)
        root.propagate = False
        _configured = True
    level = getattr(logging, get_settings().log_level, logging.INFO)
    root.setLevel(level)


class _TagAdapter(logging.LoggerAdapter):
    def process(self, msg, kwargs):
        kwargs.setdefault("extra", {})["tag"] = self.extra["tag"]
        return msg, kwargs


def get_logger(tag: str) -> logging.LoggerAdapter:
    """
    Get a logger whose lines are prefixed with a component tag.

    Args:
        tag: Component name shown in brackets (e.g., "Expert")

    Returns:
        Logger adapter writing "[Tag] message" lines
    """
    _configure_root()
    logger = logging.getLogger(f"{_ROOT_NAME}.{tag.lower().replace(' ', '_')}")
    return _TagAdapter(logger, {"tag": tag})
