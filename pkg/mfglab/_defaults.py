import os
from typing import Union

from ._exceptions import ConfigException

"""
_defaults.py
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

DEFAULT_PICARD = {"max_iter": 200, "damping": 0.5, "tol": 1e-7}
DEFAULT_SCAN = {"A_min": -5.0, "A_max": 5.0, "n_scan": 2001}
DEFAULT_PAIR_SAMPLES = 100000
ALL_PAIRS_NODE_LIMIT = 41 * 41
MAX_OUTPUT_SLICES = 200
DEFAULT_BLOWUP_FACTOR = 1e6

__all__ = [
    "DEFAULT_PICARD",
    "DEFAULT_SCAN",
    "DEFAULT_PAIR_SAMPLES",
    "ALL_PAIRS_NODE_LIMIT",
    "MAX_OUTPUT_SLICES",
    "DEFAULT_BLOWUP_FACTOR",
    "setdefaultthreads",
    "getdefaultthreads",
    "setdefaultblowupfactor",
    "getdefaultblowupfactor",
]


def _threads_from_env() -> int:
    raw = os.environ.get("MFG_LAB_THREADS", "")
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigException(f"MFG_LAB_THREADS must be an integer, got {raw!r}")
    return max(1, value)


_default_threads = _threads_from_env()
_default_blowup_factor = DEFAULT_BLOWUP_FACTOR


def setdefaultthreads(threads: int) -> None:
    """
    Set the number of worker threads used by embarrassingly parallel sweeps
    (Monte Carlo paths, lambda rows).

    Parameters
    ----------
    threads: int
        number of threads, 1 runs everything inline
    """
    global _default_threads
    if threads < 1:
        raise ConfigException(f"threads must be >= 1, got {threads}")
    _default_threads = int(threads)


def getdefaultthreads() -> int:
    """
    Get default thread count

    Returns
    ----------
    _default_threads: int
        Return the thread count, initially read from MFG_LAB_THREADS.
    """
    return _default_threads


def setdefaultblowupfactor(factor: Union[int, float]) -> None:
    """
    Set the blow-up factor f of the cap f * (1 + |U0|_inf) applied by the
    master equation solvers.

    Parameters
    ----------
    factor: int or float
        positive cap factor
    """
    global _default_blowup_factor
    if not factor > 0:
        raise ConfigException(f"blow-up factor must be positive, got {factor}")
    _default_blowup_factor = float(factor)


def getdefaultblowupfactor() -> float:
    return _default_blowup_factor
