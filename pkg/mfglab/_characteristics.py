import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ._defaults import getdefaultthreads
from ._exceptions import BlowUpException, NoiseException
from ._grid import interpolate_points
from ._logging import debug, warning
from ._master import AffineJump, Coupling, Trajectory
from ._utils import XorShift64Star, mix_seed, parallel_map, step_sizes

"""
_characteristics.py
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
    "CharPath",
    "McEstimate",
    "CharacteristicsReport",
    "sample_jump_times",
    "solve_fb_characteristics",
    "compare_characteristics_to_grid",
    "simulate_jump_characteristics",
    "estimate_value_mc",
    "simulate_abm",
]

CONVENTIONS = ("pde", "as_written")
# paths per vectorised batch; fixed so results do not depend on the thread count
_BATCH = 256


@dataclass
class CharPath:
    """
    Sampled characteristic path. Jump times appear twice in `times`, once
    for each side of the jump.
    """

    times: np.ndarray
    Y: np.ndarray
    V: np.ndarray
    jump_times: List[float] = field(default_factory=list)
    seed: Optional[int] = None
    left_box: bool = False
    convention: Optional[str] = None
    condition_number: Optional[float] = None

    @property
    def final_state(self) -> np.ndarray:
        return self.Y[-1]

    @property
    def final_value(self) -> np.ndarray:
        return self.V[-1]


@dataclass
class McEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    n_paths: int
    seed: int
    mean_jumps: float = 0.0
    jumps_stderr: float = 0.0
    paths_left_box: int = 0


@dataclass
class CharacteristicsReport:
    """
    Gaps |U(t, Y(t)) - V(t)| between a grid solution and its characteristics.

    gaps has one row per sample point and one column per output time; entries
    after a path left the box are NaN.
    """

    sample_points: np.ndarray
    times: np.ndarray
    gaps: np.ndarray
    left_box: np.ndarray

    @property
    def max_gap_per_point(self) -> np.ndarray:
        return np.nanmax(self.gaps, axis=1)

    @property
    def max_gap(self) -> float:
        return float(np.nanmax(self.gaps))


def sample_jump_times(rng: XorShift64Star, rate: float, horizon: float) -> List[float]:
    """
    Jump times of a Poisson process on [0, horizon): partial sums of
    exponential variables of parameter rate.
    """
    if rate < 0:
        raise NoiseException(f"jump rate must be nonnegative, got {rate}")
    times: List[float] = []
    if rate == 0.0:
        return times
    t = rng.exponential(rate)
    while t < horizon:
        times.append(t)
        t += rng.exponential(rate)
    return times


def _rk4_chara(coupling: Coupling, y: np.ndarray, v: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    k1y, k1v = coupling.drift(y, v), coupling.source(y, v)
    y2, v2 = y + 0.5 * h * k1y, v + 0.5 * h * k1v
    k2y, k2v = coupling.drift(y2, v2), coupling.source(y2, v2)
    y3, v3 = y + 0.5 * h * k2y, v + 0.5 * h * k2v
    k3y, k3v = coupling.drift(y3, v3), coupling.source(y3, v3)
    y4, v4 = y + h * k3y, v + h * k3v
    k4y, k4v = coupling.drift(y4, v4), coupling.source(y4, v4)
    y = y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    v = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return y, v


def solve_fb_characteristics(
    x0: Sequence[float],
    U0_eval: Callable[[np.ndarray], np.ndarray],
    coupling: Coupling,
    t_f: float,
    dt: float,
) -> CharPath:
    """
    Integrate dY/ds = F(Y, V), dV/ds = G(Y, V) with Y(0) = x0, V(0) = U0(x0)
    by the classical fourth order Runge-Kutta method.

    Parameters
    ----------
    x0: sequence of float
        starting state
    U0_eval: callable
        initial value map, Vec_d -> Vec_d
    coupling: Coupling
        the pair (F, G)
    t_f: float
        horizon
    dt: float
        step, the last step is shortened onto t_f
    """
    if not t_f > 0:
        raise NoiseException(f"horizon must be positive, got {t_f}")
    y = np.asarray(x0, dtype=float).reshape(1, -1)
    v = np.asarray(U0_eval(y[0]), dtype=float).reshape(1, -1)
    times, ys, vs = [0.0], [y[0].copy()], [v[0].copy()]
    t = 0.0
    for size in step_sizes(t_f, dt):
        y, v = _rk4_chara(coupling, y, v, size)
        t += size
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(v))):
            raise BlowUpException(f"characteristic left the finite range at s={t:.6g}", t)
        times.append(t)
        ys.append(y[0].copy())
        vs.append(v[0].copy())
    times[-1] = t_f
    return CharPath(np.array(times), np.array(ys), np.array(vs))


def compare_characteristics_to_grid(
    traj: Trajectory,
    coupling: Coupling,
    sample_points: Sequence[Sequence[float]],
    dt: float,
) -> CharacteristicsReport:
    """
    Integrate the characteristics from each sample point, starting from the
    initial slice of `traj`, and report |U(t, Y(t)) - V(t)| at every output
    time. Paths leaving the box are truncated and flagged.
    """
    grid = traj.grid
    points = np.asarray(sample_points, dtype=float).reshape(-1, grid.dim)
    y = points.copy()
    v = interpolate_points(traj.fields[0], y)
    times = np.asarray(traj.times)
    gaps = np.full((points.shape[0], len(times)), np.nan)
    alive = np.ones(points.shape[0], dtype=bool)
    gaps[:, 0] = np.linalg.norm(interpolate_points(traj.fields[0], y) - v, axis=1)
    for k in range(1, len(times)):
        span = times[k] - times[k - 1]
        if span > 0:
            for size in step_sizes(span, dt):
                y, v = _rk4_chara(coupling, y, v, size)
        inside = np.all((y >= grid.lower) & (y <= grid.upper), axis=1)
        alive &= inside
        gap = np.linalg.norm(interpolate_points(traj.fields[k], y) - v, axis=1)
        gaps[:, k] = np.where(alive, gap, np.nan)
    left = ~alive
    if np.any(left):
        warning(f"{int(np.sum(left))} characteristic path(s) left the box and were truncated")
    return CharacteristicsReport(points, times, gaps, left)


class _JumpBatch:
    """
    Backward-then-forward integration of a batch of jump characteristics
    sharing x0 and t.
    """

    def __init__(
        self,
        traj: Trajectory,
        coupling: Coupling,
        jump: AffineJump,
        discount: float,
        convention: str,
    ) -> None:
        if convention not in CONVENTIONS:
            raise NoiseException(f"convention must be one of {CONVENTIONS}, got {convention!r}")
        self.traj = traj
        self.coupling = coupling
        self.jump = jump
        self.discount = float(discount)
        self.convention = convention
        # raises SingularJumpException for singular S
        self.backward_jump = jump if convention == "pde" else jump.inverse()

    def _velocity(self, s: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.coupling.drift(y, self.traj.evaluate_many(s, y))

    def _source(self, s: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.coupling.source(y, self.traj.evaluate_many(s, y))

    def run(
        self,
        x0: np.ndarray,
        t: float,
        dt: float,
        jumps: List[List[float]],
        record: bool = False,
    ) -> Tuple[np.ndarray, np.ndarray, Optional[Tuple[list, list]]]:
        n = len(jumps)
        d = x0.size
        lam = self.discount
        y = np.tile(x0, (n, 1))
        longest = max((len(j) for j in jumps), default=0)
        table = np.full((n, longest + 1), -np.inf)
        for i, times in enumerate(jumps):
            table[i, : len(times)] = times
        pointer = np.array([len(j) - 1 for j in jumps], dtype=int)
        rows = np.arange(n)
        cur = np.full(n, float(t))
        left_box = np.zeros(n, dtype=bool)
        grid = self.traj.grid
        substeps = []
        y_record = [(float(t), y[0].copy())] if record else None

        targets = float(t) - np.cumsum(step_sizes(t, dt))
        targets[-1] = 0.0
        for target in targets:
            while True:
                pending = np.where(pointer >= 0, table[rows, np.maximum(pointer, 0)], -np.inf)
                mask = pending >= target
                end = np.where(mask, pending, target)
                h = cur - end
                if not np.any(h > 0) and not np.any(mask):
                    break
                mid = cur - 0.5 * h
                hc = h[:, None]
                k1 = self._velocity(cur, y)
                y2 = y - 0.5 * hc * k1
                k2 = self._velocity(mid, y2)
                y3 = y - 0.5 * hc * k2
                k3 = self._velocity(mid, y3)
                y4 = y - hc * k3
                k4 = self._velocity(end, y4)
                g1 = self._source(cur, y)
                g2 = self._source(mid, y2)
                g3 = self._source(mid, y3)
                g4 = self._source(end, y4)
                y = y - hc / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                if self.convention == "pde":
                    decay = np.exp(-lam * h)
                    half = np.exp(-0.5 * lam * h)[:, None]
                    increment = hc / 6.0 * (decay[:, None] * g4 + 2.0 * half * (g2 + g3) + g1)
                else:
                    decay = np.ones(n)
                    increment = hc / 6.0 * (g1 + 2.0 * g2 + 2.0 * g3 + g4)
                if record:
                    y_record.append((float(end[0]), y[0].copy()))
                if np.any(mask):
                    y[mask] = self.backward_jump.apply(y[mask])
                    pointer[mask] -= 1
                    if record and mask[0]:
                        y_record.append((float(end[0]), y[0].copy()))
                left_box |= ~np.all((y >= grid.lower) & (y <= grid.upper), axis=1)
                substeps.append((end.copy(), cur.copy(), decay, increment, mask.copy()))
                cur = end
                if not np.all(np.isfinite(y)):
                    raise BlowUpException(
                        f"jump characteristic left the finite range at s={float(np.min(end)):.6g}",
                        float(np.min(end)),
                    )
                if not np.any(mask):
                    break

        # forward pass for V
        w = interpolate_points(self.traj.fields[0], y)
        v_record = [(0.0, w[0].copy())] if record else None
        for end, stop, decay, increment, jumped in reversed(substeps):
            if np.any(jumped):
                w[jumped] = w[jumped] @ self.jump.S
                if record and jumped[0]:
                    v_record.append((float(end[0]), self._value(w[0], end[0])))
            w = decay[:, None] * w + increment
            if record:
                v_record.append((float(stop[0]), self._value(w[0], stop[0])))
        values = w if self.convention == "pde" else math.exp(-lam * t) * w
        if record:
            return values, left_box, (list(reversed(y_record)), v_record)
        return values, left_box, None

    def _value(self, w: np.ndarray, s: float) -> np.ndarray:
        if self.convention == "pde":
            return w.copy()
        return math.exp(-self.discount * s) * w


def simulate_jump_characteristics(
    x0: Sequence[float],
    t: float,
    traj: Trajectory,
    coupling: Coupling,
    J: AffineJump,
    jump_rate: float,
    discount: float,
    dt: float,
    seed: int,
    convention: str = "pde",
) -> CharPath:
    """
    One sampled path of the stochastic characteristics of the Poisson master
    equation, pinned at Y(t) = x0.

    Jump times are partial sums of exponential variables drawn from a
    xorshift64* stream seeded with `seed`. Y is integrated backward from t
    with dY/ds = F(Y, U(s, Y)); V is integrated forward from V(0) = U0(Y(0))
    and jumps as V+ = S^T V-.

    convention="pde" crosses a jump backward with Y- = T(Y+) and uses
    dV/ds = G(Y, U(s, Y)) - discount V, so that E[V(t)] = U(t, x0) for the
    grid solution of the Poisson master equation. convention="as_written"
    crosses a jump backward with Y- = T^-1(Y+) and uses
    d(e^{discount s} V) = G ds; it raises SingularJumpException for
    singular S.

    Returns
    ----------
    path: CharPath
        samples at the step grid of size dt plus both sides of every jump
    """
    if not t > 0:
        raise NoiseException(f"pinning time must be positive, got {t}")
    batch = _JumpBatch(traj, coupling, J, discount, convention)
    rng = XorShift64Star(seed)
    jumps = sample_jump_times(rng, jump_rate, t)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    _, left_box, (y_record, v_record) = batch.run(x0, t, dt, [jumps], record=True)
    if left_box[0]:
        warning(f"jump characteristic from {x0.tolist()} left the box")
    times = np.array([s for s, _ in y_record])
    return CharPath(
        times=times,
        Y=np.array([y for _, y in y_record]),
        V=np.array([v for _, v in v_record]),
        jump_times=jumps,
        seed=seed,
        left_box=bool(left_box[0]),
        convention=convention,
        condition_number=J.condition_number,
    )


def estimate_value_mc(
    x0: Sequence[float],
    t: float,
    traj: Trajectory,
    coupling: Coupling,
    J: AffineJump,
    jump_rate: float,
    discount: float,
    dt: float,
    n_paths: int,
    seed: int,
    convention: str = "pde",
    threads: Optional[int] = None,
) -> McEstimate:
    """
    Monte Carlo estimate of E[V(t)] over n_paths independent paths.

    Path i uses seed mix_seed(seed, i); paths are integrated in fixed-size
    batches, fanned out over `threads` workers (process default when
    omitted), so the estimate does not depend on the thread count.
    """
    if n_paths < 2:
        raise NoiseException(f"n_paths must be at least 2, got {n_paths}")
    if not t > 0:
        raise NoiseException(f"pinning time must be positive, got {t}")
    batch = _JumpBatch(traj, coupling, J, discount, convention)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    seeds = [mix_seed(seed, i) for i in range(n_paths)]
    chunks = [seeds[i: i + _BATCH] for i in range(0, n_paths, _BATCH)]

    def run_chunk(chunk: List[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        jumps = [sample_jump_times(XorShift64Star(s), jump_rate, t) for s in chunk]
        values, left_box, _ = batch.run(x0, t, dt, jumps)
        return values, left_box, np.array([len(j) for j in jumps], dtype=float)

    threads = getdefaultthreads() if threads is None else threads
    results = parallel_map(run_chunk, chunks, threads)
    values = np.concatenate([r[0] for r in results])
    left_box = np.concatenate([r[1] for r in results])
    counts = np.concatenate([r[2] for r in results])
    if np.any(left_box):
        warning(f"{int(np.sum(left_box))} of {n_paths} jump characteristics left the box")
    stderr = np.std(values, axis=0, ddof=1) / math.sqrt(n_paths)
    debug(f"estimate_value_mc: {n_paths} paths, mean jumps {counts.mean():.4f}")
    return McEstimate(
        mean=values.mean(axis=0),
        stderr=stderr,
        n_paths=n_paths,
        seed=seed,
        mean_jumps=float(counts.mean()),
        jumps_stderr=float(np.std(counts, ddof=1) / math.sqrt(n_paths)),
        paths_left_box=int(np.sum(left_box)),
    )


def simulate_abm(
    x0: Sequence[float],
    coupling: Coupling,
    J: AffineJump,
    rate: float,
    t_f: float,
    dt: float,
    seed: int,
) -> CharPath:
    """
    Forward agent-based jump flow: dY = F(Y, 0) ds between the jump times of
    a Poisson(rate) process, Y+ = T(Y-) at each jump. V is unused and left
    at zero.
    """
    if not t_f > 0:
        raise NoiseException(f"horizon must be positive, got {t_f}")
    jumps = sample_jump_times(XorShift64Star(seed), rate, t_f)
    y = np.asarray(x0, dtype=float).reshape(1, -1)
    zero = np.zeros_like(y)

    def velocity(state: np.ndarray) -> np.ndarray:
        return coupling.drift(state, zero)

    times, ys = [0.0], [y[0].copy()]
    edges = [0.0] + jumps + [t_f]
    for k in range(len(edges) - 1):
        start, stop = edges[k], edges[k + 1]
        if k > 0:
            y = J.apply(y)
            times.append(start)
            ys.append(y[0].copy())
        if stop <= start:
            continue
        s = start
        sizes = step_sizes(stop - start, dt)
        for i, size in enumerate(sizes):
            k1 = velocity(y)
            k2 = velocity(y + 0.5 * size * k1)
            k3 = velocity(y + 0.5 * size * k2)
            k4 = velocity(y + size * k3)
            y = y + size / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            s = stop if i + 1 == len(sizes) else s + size
            times.append(s)
            ys.append(y[0].copy())
    ys_arr = np.array(ys)
    return CharPath(
        times=np.array(times),
        Y=ys_arr,
        V=np.zeros_like(ys_arr),
        jump_times=jumps,
        seed=seed,
    )
