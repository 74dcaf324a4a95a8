import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List

"""
_utils.py
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
__all__ = [
    "XorShift64Star",
    "splitmix64",
    "mix_seed",
    "parallel_map",
    "format_float",
    "step_sizes",
]

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_XORSHIFT_MULTIPLIER = 0x2545F4914F6CDD1D


def splitmix64(value: int) -> int:
    """
    One splitmix64 finalisation round.
    """
    z = (value + _GOLDEN_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(seed: int, index: int) -> int:
    """
    Derive the seed of sub-task `index` from a base seed.

    The derivation only depends on (seed, index), so results do not depend
    on how the sub-tasks are scheduled.
    """
    return splitmix64((seed + (index + 1) * _GOLDEN_GAMMA) & _MASK64)


class XorShift64Star:
    """
    xorshift64* generator.

    state ^= state >> 12; state ^= state << 25; state ^= state >> 27;
    output = state * 0x2545F4914F6CDD1D (mod 2^64).

    The state is seeded through splitmix64 so every 64-bit seed, 0 included,
    gives a non-zero state. Streams are bit-identical across platforms.

    Parameters
    ----------
    seed: int
        any integer, reduced modulo 2^64
    """

    def __init__(self, seed: int) -> None:
        state = splitmix64(seed & _MASK64)
        self.state = state if state != 0 else _GOLDEN_GAMMA

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self.state = x
        return (x * _XORSHIFT_MULTIPLIER) & _MASK64

    def uniform(self) -> float:
        # 53 high bits -> [0, 1)
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def exponential(self, rate: float) -> float:
        """
        Sample an exponential variable of parameter `rate` by inverse CDF.
        """
        return -math.log(1.0 - self.uniform()) / rate


def parallel_map(func: Callable, items: Iterable, threads: int = 1) -> List:
    """
    Order preserving map, fanned out on a thread pool when threads > 1.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def format_float(value: float) -> str:
    """
    Locale independent text for a double, 17 significant digits.
    """
    return format(float(value), ".17g")


def step_sizes(horizon: float, dt: float) -> List[float]:
    """
    Split [0, horizon] into ceil(horizon / dt) steps of size dt, the last
    one shortened so the steps land exactly on the horizon.
    """
    n = max(int(math.ceil(horizon / dt - 1e-9)), 1)
    steps = [dt] * (n - 1)
    steps.append(horizon - dt * (n - 1))
    return steps
