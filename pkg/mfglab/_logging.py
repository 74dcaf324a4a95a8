import logging
from typing import Optional

"""
_logging.py
mfglab - numerical laboratory for finite-state master equations

Copyright 2026 mfg-lab contributors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""

_logger = logging.getLogger("mfglab")
_logger.addHandler(logging.NullHandler())

_traceEnabled = False
_traceHandler: Optional[logging.Handler] = None

__all__ = [
    "enableTrace",
    "dump",
    "error",
    "warning",
    "info",
    "debug",
    "trace",
    "isEnabledForTrace",
]


def enableTrace(
    traceable: bool,
    handler: logging.Handler = None,
    level: str = "DEBUG",
) -> None:
    """
    Turn on/off the traceability of the solvers.

    Parameters
    ----------
    traceable: bool
        If set to True, per-step solver traces are emitted.
    handler: logging.Handler
        Handler attached while tracing is on, replacing the previous one.
        Defaults to a StreamHandler on stderr.
    level: str
        Level name set on the "mfglab" logger.
    """
    global _traceEnabled, _traceHandler
    _traceEnabled = traceable
    if _traceHandler is not None:
        _logger.removeHandler(_traceHandler)
        _traceHandler = None
    if traceable:
        _traceHandler = handler if handler is not None else logging.StreamHandler()
        _logger.addHandler(_traceHandler)
        _logger.setLevel(getattr(logging, level))


def dump(title: str, message: str) -> None:
    """
    Trace a multi-line block, such as a resolved config or a residual table.
    """
    if _traceEnabled:
        _logger.debug(f"--- {title} ---\n{message}\n" + "-" * (len(title) + 8))


def error(msg: str) -> None:
    _logger.error(msg)


def warning(msg: str) -> None:
    _logger.warning(msg)


def debug(msg: str) -> None:
    _logger.debug(msg)


def info(msg: str) -> None:
    _logger.info(msg)


def trace(msg: str) -> None:
    if _traceEnabled:
        _logger.debug(msg)


def isEnabledForTrace() -> bool:
    return _traceEnabled
