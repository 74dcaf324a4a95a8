import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ._defaults import ALL_PAIRS_NODE_LIMIT, DEFAULT_PAIR_SAMPLES
from ._exceptions import CouplingException
from ._grid import Grid, ValueField
from ._logging import debug, warning
from ._master import Coupling, LinearBlock, Trajectory

"""
_monotonicity.py
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
    "G_MONOTONE",
    "F_MONOTONE",
    "RandomPairs",
    "MonotonicityReport",
    "BetaGammaSchedule",
    "LipschitzBudget",
    "LipschitzCheck",
    "MaxPrincipleResult",
    "monotonicity_modulus",
    "field_modulus",
    "verify_propagation",
    "default_tolerance",
    "lipschitz_beta",
    "beta_gamma_schedule",
    "lipschitz_budget",
    "lipschitz_bound",
    "measured_lipschitz",
    "check_lipschitz_bound",
    "max_principle_check",
    "strong_monotonicity_coupling_modulus",
]

G_MONOTONE = "G_monotone"
F_MONOTONE = "F_monotone"
_ROW_CHUNK = 128


@dataclass(frozen=True)
class RandomPairs:
    """
    Seeded uniform sample of node pairs.
    """

    n: int = DEFAULT_PAIR_SAMPLES
    seed: int = 0


PairStrategy = Union[str, RandomPairs]


@dataclass
class MonotonicityReport:
    """
    Per output time, the minimum over node pairs (x, y) of
    <U(t,x) - U(t,y), x - y> / |x - y|^2 and the pair realising it.
    """

    times: List[float]
    min_pairing: np.ndarray
    argmin_pair: List[Tuple[Tuple[int, ...], Tuple[int, ...]]]
    pair_count: int
    tol: float
    strategy: str = "all_nodes"

    @property
    def holds(self) -> bool:
        return bool(np.all(self.min_pairing >= -self.tol))

    @property
    def first_failure(self) -> Optional[int]:
        failing = np.nonzero(self.min_pairing < -self.tol)[0]
        return int(failing[0]) if failing.size else None

    @property
    def worst(self) -> float:
        return float(np.min(self.min_pairing))


@dataclass
class BetaGammaSchedule:
    case: str
    times: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    valid: bool
    crossing_time: Optional[float] = None

    def at(self, t: float) -> Tuple[float, float]:
        return (
            float(np.interp(t, self.times, self.beta)),
            float(np.interp(t, self.times, self.gamma)),
        )


@dataclass
class LipschitzBudget:
    """
    Constants of the space-Lipschitz estimate and the resulting bounds.

    `beta` is the constant bound; when a schedule is attached the bound at
    time t is (1 + sqrt(1 + 4 beta(t) gamma(t))) / (2 beta(t)), which is
    1 / beta(t) when gamma vanishes.
    """

    alpha: float
    rate: float
    s_norm: float
    lip_G_x: float
    lip_F_x: float
    lip_F_u: float
    lip_G_u: float
    lip_U0: float
    beta: float
    schedule: Optional[BetaGammaSchedule] = None

    @property
    def bound(self) -> Optional[float]:
        return 1.0 / self.beta if self.beta > 0 else None

    @property
    def beta_of_t(self) -> Optional[np.ndarray]:
        return None if self.schedule is None else self.schedule.beta

    @property
    def gamma_of_t(self) -> Optional[np.ndarray]:
        return None if self.schedule is None else self.schedule.gamma

    def bound_at(self, t: float) -> Optional[float]:
        if self.schedule is None or not self.schedule.valid:
            return self.bound
        beta, gamma = self.schedule.at(t)
        return lipschitz_bound(beta, gamma)


@dataclass
class LipschitzCheck:
    holds: bool
    worst_ratio: float
    time: float
    measured: np.ndarray


@dataclass
class MaxPrincipleResult:
    holds: bool
    min_value: float
    arg: Tuple[int, Tuple[int, ...]]


def monotonicity_modulus(
    map_eval: Callable[[np.ndarray], np.ndarray],
    pairs: Sequence[Tuple[Sequence[float], Sequence[float]]],
    vectorized: bool = False,
) -> float:
    """
    Lower estimate of the monotonicity modulus of a map over sampled pairs.

    Returns min over pairs of <V(x) - V(y), x - y> / |x - y|^2. Coincident
    pairs are skipped and counted in a warning.

    Parameters
    ----------
    map_eval: callable
        V, Vec_d -> Vec_d, or (N, d) -> (N, d) with vectorized=True
    pairs: sequence of (x, y)
        sample pairs
    vectorized: bool
        evaluate all points in one call
    """
    pairs = list(pairs)
    if not pairs:
        raise CouplingException("at least one pair is needed")
    xs = np.array([np.asarray(p[0], dtype=float).reshape(-1) for p in pairs])
    ys = np.array([np.asarray(p[1], dtype=float).reshape(-1) for p in pairs])
    if vectorized:
        vx = np.asarray(map_eval(xs), dtype=float).reshape(xs.shape)
        vy = np.asarray(map_eval(ys), dtype=float).reshape(ys.shape)
    else:
        vx = np.array([np.asarray(map_eval(x), dtype=float).reshape(-1) for x in xs])
        vy = np.array([np.asarray(map_eval(y), dtype=float).reshape(-1) for y in ys])
    dx = xs - ys
    den = np.sum(dx * dx, axis=1)
    keep = den > 0
    skipped = int(np.sum(~keep))
    if skipped:
        warning(f"monotonicity_modulus skipped {skipped} coincident pair(s)")
    if not np.any(keep):
        raise CouplingException("every sampled pair is coincident")
    num = np.sum((vx - vy) * dx, axis=1)
    return float(np.min(num[keep] / den[keep]))


def _all_pairs_min(values: np.ndarray, coords: np.ndarray) -> Tuple[float, int, int]:
    n = coords.shape[0]
    best, best_i, best_j = np.inf, 0, 1
    columns = np.arange(n)
    for start in range(0, n - 1, _ROW_CHUNK):
        stop = min(start + _ROW_CHUNK, n - 1)
        dx = coords[start:stop, None, :] - coords[None, :, :]
        du = values[start:stop, None, :] - values[None, :, :]
        den = np.sum(dx * dx, axis=-1)
        num = np.sum(du * dx, axis=-1)
        upper = columns[None, :] > np.arange(start, stop)[:, None]
        ratio = np.where(upper & (den > 0), num / np.where(den > 0, den, 1.0), np.inf)
        flat = int(np.argmin(ratio))
        row, col = divmod(flat, n)
        if ratio[row, col] < best:
            best, best_i, best_j = float(ratio[row, col]), start + row, col
    return best, best_i, best_j


def _sampled_pairs(n_nodes: int, strategy: RandomPairs) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(strategy.seed)
    i = rng.integers(0, n_nodes, size=strategy.n)
    j = rng.integers(0, n_nodes, size=strategy.n)
    distinct = i != j
    if not np.all(distinct):
        debug(f"random pair sample dropped {int(np.sum(~distinct))} coincident pair(s)")
    return i[distinct], j[distinct]


def field_modulus(
    field: ValueField, strategy: PairStrategy = "auto"
) -> Tuple[float, Tuple[int, ...], Tuple[int, ...], int]:
    """
    Minimum pairing of one field over node pairs.

    Returns
    ----------
    (min_pairing, node_a, node_b, pair_count)
    """
    grid = field.grid
    coords = grid.flat_coordinates
    values = field.flat
    strategy = _resolve_strategy(grid, strategy)
    if strategy == "all_nodes":
        best, i, j = _all_pairs_min(values, coords)
        count = grid.size * (grid.size - 1) // 2
    else:
        rows, cols = _sampled_pairs(grid.size, strategy)
        dx = coords[rows] - coords[cols]
        ratio = np.sum((values[rows] - values[cols]) * dx, axis=1) / np.sum(dx * dx, axis=1)
        k = int(np.argmin(ratio))
        best, i, j = float(ratio[k]), int(rows[k]), int(cols[k])
        count = int(rows.size)
    return best, grid.unravel(i), grid.unravel(j), count


def _resolve_strategy(grid: Grid, strategy: PairStrategy) -> PairStrategy:
    if strategy == "auto":
        return "all_nodes" if grid.size <= ALL_PAIRS_NODE_LIMIT else RandomPairs()
    if strategy == "all_nodes" or isinstance(strategy, RandomPairs):
        return strategy
    raise CouplingException(f"unknown pair strategy {strategy!r}")


def default_tolerance(grid: Grid, dt: float) -> float:
    """
    10 (h + dt) diam^2, proportional to the first order scheme error.
    """
    return 10.0 * (grid.h + dt) * grid.diameter ** 2


def verify_propagation(
    traj: Trajectory, pair_strategy: PairStrategy = "auto", tol: Optional[float] = None
) -> MonotonicityReport:
    """
    Check that every slice of a trajectory stays monotone up to -tol.

    Parameters
    ----------
    traj: Trajectory
        grid solution
    pair_strategy: "all_nodes", "auto" or RandomPairs
        "auto" takes all pairs on grids up to 41 x 41 nodes and a seeded
        random sample beyond
    tol: float
        tolerance, 10 (h + dt) diam^2 when omitted
    """
    grid = traj.grid
    if tol is None:
        tol = default_tolerance(grid, float(traj.scheme_meta.get("dt", 0.0)))
    strategy = _resolve_strategy(grid, pair_strategy)
    minima, argmins = [], []
    count = 0
    for f in traj.fields:
        best, a, b, count = field_modulus(f, strategy)
        minima.append(best)
        argmins.append((a, b))
    report = MonotonicityReport(
        list(traj.times),
        np.array(minima),
        argmins,
        count,
        float(tol),
        "all_nodes" if strategy == "all_nodes" else f"random({strategy.n},{strategy.seed})",
    )
    if not report.holds:
        k = report.first_failure
        warning(
            f"monotonicity lost at t={report.times[k]:.6g}: pairing {report.min_pairing[k]:.3e} "
            f"between nodes {argmins[k][0]} and {argmins[k][1]}"
        )
    return report


def lipschitz_beta(
    alpha: float,
    rate: float,
    s_norm: float,
    lip_G_x: float,
    lip_F_x: float,
    lip_U0: float,
) -> float:
    """
    beta = min(alpha / (rate (|S|^2 - 1)^+ + |grad_x G| + 2 |grad_x F|), |grad_x U0|).

    The space-Lipschitz constant of U is then at most 1 / beta. alpha = 0
    gives beta = 0 (no bound); a vanishing denominator leaves the |grad U0|
    branch.
    """
    if alpha <= 0.0:
        return 0.0
    denom = rate * max(s_norm ** 2 - 1.0, 0.0) + lip_G_x + 2.0 * lip_F_x
    if denom == 0.0:
        return float(lip_U0)
    return float(min(alpha / denom, lip_U0))


def lipschitz_bound(beta: float, gamma: float = 0.0) -> Optional[float]:
    """
    Largest L with beta L^2 - L - gamma <= 0, the Lipschitz bound implied by
    beta and gamma; None when beta <= 0.
    """
    if beta <= 0.0:
        return None
    return (1.0 + math.sqrt(1.0 + 4.0 * beta * max(gamma, 0.0))) / (2.0 * beta)


def beta_gamma_schedule(
    case: str,
    alpha: float,
    rate: float,
    s_norm: float,
    lip_G_x: float,
    lip_F_x: float,
    lip_F_u: float,
    lip_G_u: float,
    lip_U0: float,
    t_f: float,
    beta0: Optional[float] = None,
    n_steps: int = 1000,
) -> BetaGammaSchedule:
    """
    Time dependent constants of the Lipschitz estimate.

    G_monotone (U0 and G alpha monotone):
        beta(t) = alpha exp(-(2 |grad_x F| + |grad_x G| + (|S|^2 - 1)^+ rate) t),
        gamma = 0.
    F_monotone (F alpha monotone in u), integrated with RK4 from
    gamma(0) = beta0 |grad U0|^2:
        beta'  = alpha - beta [|grad_x G| + 2 |grad_x F| + rate (|S|^2 - 1)^+] - gamma |D_u F|
        gamma' = gamma [-rate (|S|^2 - 1)^+ + |D_u F| + 2 |D_u G|] + beta |grad_x G|

    The schedule is valid iff beta stays positive on [0, t_f]; otherwise the
    first crossing time is reported.
    """
    excess = rate * max(s_norm ** 2 - 1.0, 0.0)
    times = np.linspace(0.0, t_f, n_steps + 1)
    if case == G_MONOTONE:
        beta = alpha * np.exp(-(2.0 * lip_F_x + lip_G_x + excess) * times)
        gamma = np.zeros_like(times)
    elif case == F_MONOTONE:
        if beta0 is None or not beta0 > 0:
            raise CouplingException(f"F_monotone schedule needs beta0 > 0, got {beta0}")

        def rhs(state: np.ndarray) -> np.ndarray:
            b, g = state
            return np.array(
                [
                    alpha - b * (lip_G_x + 2.0 * lip_F_x + excess) - g * lip_F_u,
                    g * (-excess + lip_F_u + 2.0 * lip_G_u) + b * lip_G_x,
                ]
            )

        h = t_f / n_steps
        states = np.empty((n_steps + 1, 2))
        states[0] = (beta0, beta0 * lip_U0 ** 2)
        for k in range(n_steps):
            s = states[k]
            k1 = rhs(s)
            k2 = rhs(s + 0.5 * h * k1)
            k3 = rhs(s + 0.5 * h * k2)
            k4 = rhs(s + h * k3)
            states[k + 1] = s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        beta, gamma = states[:, 0], states[:, 1]
    else:
        raise CouplingException(f"case must be {G_MONOTONE!r} or {F_MONOTONE!r}, got {case!r}")
    nonpositive = np.nonzero(beta <= 0.0)[0]
    valid = nonpositive.size == 0
    crossing = None if valid else float(times[nonpositive[0]])
    if not valid:
        warning(f"{case} schedule: beta reaches 0 at t={crossing:.6g}")
    return BetaGammaSchedule(case, times, beta, gamma, valid, crossing)


def strong_monotonicity_coupling_modulus(coupling: Coupling, part: str = "block") -> float:
    """
    Monotonicity modulus of a linear coupling, read off its certificate.

    part="block" is the smallest eigenvalue of the symmetric part of
    [[A, B], [C, D]]; "G_x" uses A alone (G monotone in x) and "F_u" uses D
    alone (F monotone in u).
    """
    certificate = coupling.certificate
    if not isinstance(certificate, LinearBlock):
        raise CouplingException("the modulus is only available for LinearBlock couplings")
    if part == "block":
        matrix = certificate.symmetric_part()
    elif part == "G_x":
        matrix = 0.5 * (certificate.A + certificate.A.T)
    elif part == "F_u":
        matrix = 0.5 * (certificate.D + certificate.D.T)
    else:
        raise CouplingException(f"unknown part {part!r}")
    return float(np.linalg.eigvalsh(matrix)[0])


def lipschitz_budget(
    coupling: Coupling,
    alpha: float,
    rate: float,
    s_norm: float,
    lip_U0: float,
    t_f: Optional[float] = None,
    case: Optional[str] = None,
    beta0: Optional[float] = None,
) -> LipschitzBudget:
    """
    Gather the constants of the Lipschitz estimate for one scenario.

    With t_f and case, the matching beta/gamma schedule is attached.
    """
    beta = lipschitz_beta(alpha, rate, s_norm, coupling.lip_G_x, coupling.lip_F_x, lip_U0)
    schedule = None
    if case is not None and t_f is not None:
        schedule = beta_gamma_schedule(
            case,
            alpha,
            rate,
            s_norm,
            coupling.lip_G_x,
            coupling.lip_F_x,
            coupling.lip_F_u,
            coupling.lip_G_u,
            lip_U0,
            t_f,
            beta0=beta0 if beta0 is not None else (beta if beta > 0 else None),
        )
    return LipschitzBudget(
        alpha=alpha,
        rate=rate,
        s_norm=s_norm,
        lip_G_x=coupling.lip_G_x,
        lip_F_x=coupling.lip_F_x,
        lip_F_u=coupling.lip_F_u,
        lip_G_u=coupling.lip_G_u,
        lip_U0=lip_U0,
        beta=beta,
        schedule=schedule,
    )


def _field_lipschitz(field: ValueField) -> float:
    grid = field.grid
    best = 0.0
    for axis in range(grid.dim):
        diff = np.diff(field.values, axis=axis)
        slope = np.linalg.norm(diff, axis=-1) / grid.spacing[axis]
        best = max(best, float(np.max(slope)))
    return best


def measured_lipschitz(traj: Union[Trajectory, ValueField]) -> np.ndarray:
    """
    Per output time, the largest |U(x) - U(y)| / |x - y| over neighbouring
    nodes.
    """
    if isinstance(traj, ValueField):
        return np.array([_field_lipschitz(traj)])
    return np.array([_field_lipschitz(f) for f in traj.fields])


def check_lipschitz_bound(
    traj: Trajectory, beta: Union[float, LipschitzBudget], slack: float = 0.1
) -> LipschitzCheck:
    """
    Compare the measured Lipschitz constants with the bound 1 / beta (or a
    budget's time dependent bound) inflated by `slack`. Failures are flagged,
    not raised.
    """
    measured = measured_lipschitz(traj)
    ratios = np.empty(len(traj.times))
    for k, t in enumerate(traj.times):
        bound = beta.bound_at(t) if isinstance(beta, LipschitzBudget) else lipschitz_bound(beta)
        ratios[k] = np.inf if bound is None else measured[k] / bound
    k = int(np.argmax(ratios))
    holds = bool(ratios[k] <= 1.0 + slack)
    if not holds:
        warning(
            f"Lipschitz bound exceeded at t={traj.times[k]:.6g}: measured/bound = {ratios[k]:.4f}"
        )
    return LipschitzCheck(holds, float(ratios[k]), float(traj.times[k]), measured)


def max_principle_check(
    scalar_traj: Sequence[np.ndarray], tol: float = 1e-12
) -> MaxPrincipleResult:
    """
    Global minimum of a time-indexed scalar field on any product grid.

    Returns
    ----------
    result: MaxPrincipleResult
        holds iff the minimum is >= -tol; arg is (time index, node index)
    """
    best, arg = np.inf, (0, ())
    for k, values in enumerate(scalar_traj):
        values = np.asarray(values, dtype=float)
        flat = int(np.argmin(values))
        low = float(values.reshape(-1)[flat])
        if low < best:
            best = low
            arg = (k, tuple(int(i) for i in np.unravel_index(flat, values.shape)))
    return MaxPrincipleResult(bool(best >= -tol), best, arg)
