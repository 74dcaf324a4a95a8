import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ._defaults import DEFAULT_PICARD, DEFAULT_SCAN, getdefaultthreads
from ._exceptions import (
    BlowUpException,
    CflException,
    ConfigException,
    CouplingException,
    DensityException,
    EffectiveDiffusionException,
    FieldException,
    MfgLabException,
)
from ._grid import (
    ScalarField1D,
    periodic_gradient,
    periodic_laplacian,
    periodic_shift,
    wasserstein1_periodic,
)
from ._logging import debug, isEnabledForTrace, trace, warning
from ._utils import parallel_map, step_sizes

"""
_mfg.py
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
    "HamiltonianSpec",
    "Separable",
    "Quadratic",
    "HjbTrajectory",
    "FpTrajectory",
    "MfgSolution1D",
    "MomentumSeries",
    "StrongCouplingResult",
    "SemiconcavityResult",
    "LambdaSweepRow",
    "cole_hopf_hjb",
    "hjb_residual",
    "solve_fp",
    "solve_mfg_discounted",
    "effective_diffusion",
    "solve_fp_higher_order",
    "solve_fp_relative_cost",
    "conserved_momentum",
    "scan_mean_control",
    "solve_strong_coupling",
    "uniqueness_threshold",
    "semiconcavity_check",
    "lambda_sweep",
]

_W_FLOOR = 1e-300
_NEGATIVE_DENSITY = -1e-12
_ROOT_TOL = 1e-10
_DERIVATIVE_STEP = 1e-6
INITIAL_GUESSES = ("heat", "uniform")

DriftLike = Union[float, Callable[[float, np.ndarray, np.ndarray], np.ndarray]]


def _local_derivative(func: Callable[[np.ndarray], np.ndarray], z: np.ndarray) -> np.ndarray:
    return (np.asarray(func(z + _DERIVATIVE_STEP)) - np.asarray(func(z - _DERIVATIVE_STEP))) / (
        2.0 * _DERIVATIVE_STEP
    )


class HamiltonianSpec:
    """
    Base class of the torus Hamiltonians H(t, x, p, m).

    Every evaluator is vectorized over the nodes: x, p and m are arrays of
    the same length and the result is an array of that length.
    """

    x_dependent = False

    def value(self, t: float, x: np.ndarray, p: np.ndarray, m: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dp(self, t: float, x: np.ndarray, p: np.ndarray, m: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dpp(self, t: float, x: np.ndarray, p: np.ndarray, m: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> Dict:
        return {"kind": type(self).__name__}


class Separable(HamiltonianSpec):
    """
    H(x, p, m) = H~(p) - f(m), with no dependence on x.

    Parameters
    ----------
    h_tilde: callable
        convex p -> H~(p)
    dh_tilde: callable
        its derivative
    f: callable
        local coupling m -> f(m), zero when omitted
    df: callable
        derivative of f, central differences of f when omitted
    d2h_tilde: callable
        second derivative of H~, central differences of dh_tilde when omitted
    """

    def __init__(
        self,
        h_tilde: Callable[[np.ndarray], np.ndarray],
        dh_tilde: Callable[[np.ndarray], np.ndarray],
        f: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        df: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        d2h_tilde: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        name: str = "custom",
    ) -> None:
        self.h_tilde = h_tilde
        self.dh_tilde = dh_tilde
        self.f = f
        self.df = df
        self.d2h_tilde = d2h_tilde
        self.name = name

    @classmethod
    def quadratic(
        cls,
        f: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        df: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        name: str = "quadratic",
    ) -> "Separable":
        """
        H~(p) = p^2 / 2.
        """
        return cls(
            lambda p: 0.5 * p * p,
            lambda p: p,
            f,
            df,
            lambda p: np.ones_like(p),
            name=name,
        )

    @classmethod
    def free(cls) -> "Separable":
        """
        H = 0: no control cost and no coupling.
        """
        return cls(np.zeros_like, np.zeros_like, None, None, np.zeros_like, name="zero")

    def coupling(self, m: np.ndarray) -> np.ndarray:
        if self.f is None:
            return np.zeros_like(m)
        return np.asarray(self.f(m), dtype=float) * np.ones_like(m)

    def coupling_derivative(self, m: np.ndarray) -> np.ndarray:
        if self.f is None:
            return np.zeros_like(m)
        if self.df is None:
            return _local_derivative(self.coupling, m)
        return np.asarray(self.df(m), dtype=float) * np.ones_like(m)

    def value(self, t, x, p, m):
        return np.asarray(self.h_tilde(p), dtype=float) - self.coupling(m)

    def dp(self, t, x, p, m):
        return np.asarray(self.dh_tilde(p), dtype=float) * np.ones_like(m)

    def dpp(self, t, x, p, m):
        if self.d2h_tilde is None:
            return _local_derivative(self.dh_tilde, p)
        return np.asarray(self.d2h_tilde(p), dtype=float) * np.ones_like(m)

    def dz(self, t, x, p, m):
        """
        Derivative of H in its measure slot, -f'(m).
        """
        return -self.coupling_derivative(m)

    def describe(self) -> Dict:
        return {"kind": "separable", "name": self.name}


class Quadratic(HamiltonianSpec):
    """
    H(t, x, p, m) = B(t, x, m) p + delta p^2 for a bounded drift field B.

    Parameters
    ----------
    drift: callable
        (t, x, m) -> B, evaluated on all nodes at once
    delta: float
        positive curvature
    """

    x_dependent = True

    def __init__(self, drift: Callable[[float, np.ndarray, np.ndarray], np.ndarray], delta: float, name: str = "custom") -> None:
        if not delta > 0:
            raise CouplingException(f"delta must be positive, got {delta}")
        self.drift = drift
        self.delta = float(delta)
        self.name = name

    def _b(self, t, x, m):
        b = np.asarray(self.drift(t, x, m), dtype=float) * np.ones_like(m)
        if not np.all(np.isfinite(b)):
            raise FieldException(f"drift field is not bounded at t={t:.6g}")
        return b

    def value(self, t, x, p, m):
        return self._b(t, x, m) * p + self.delta * p * p

    def dp(self, t, x, p, m):
        return self._b(t, x, m) + 2.0 * self.delta * p

    def dpp(self, t, x, p, m):
        return np.full_like(m, 2.0 * self.delta)

    def describe(self) -> Dict:
        return {"kind": "quadratic", "name": self.name, "delta": self.delta}


@dataclass
class HjbTrajectory:
    """
    Value function samples u[k] at times[k] on the n-node circle.
    """

    times: np.ndarray
    u: np.ndarray

    @property
    def n(self) -> int:
        return self.u.shape[1]

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def at(self, k: int) -> ScalarField1D:
        return ScalarField1D(self.u[k])


@dataclass
class FpTrajectory:
    """
    Density samples m[k] at times[k] on the n-node circle.
    """

    times: np.ndarray
    m: np.ndarray

    @property
    def n(self) -> int:
        return self.m.shape[1]

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def final(self) -> ScalarField1D:
        return ScalarField1D(self.m[-1])

    def at(self, k: int) -> ScalarField1D:
        return ScalarField1D(self.m[k])

    def masses(self) -> np.ndarray:
        return self.m.sum(axis=1) * self.h

    def min_value(self) -> float:
        return float(self.m.min())


@dataclass
class MfgSolution1D:
    """
    Output of solve_mfg_discounted and of the strongly coupled solver.

    u and m hold one row per time level. residuals[i] is the sup-norm gap
    between Picard iterates i and i+1 (inf on the first iteration).
    """

    times: np.ndarray
    u: np.ndarray
    m: np.ndarray
    picard_iterations: int
    residuals: List[float]
    converged: bool
    settings: Dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.u.shape[1]

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def u_fields(self) -> List[ScalarField1D]:
        return [ScalarField1D(row) for row in self.u]

    @property
    def m_fields(self) -> List[ScalarField1D]:
        return [ScalarField1D(row) for row in self.m]

    @property
    def density(self) -> FpTrajectory:
        return FpTrajectory(self.times, self.m)

    @property
    def value(self) -> HjbTrajectory:
        return HjbTrajectory(self.times, self.u)


@dataclass
class MomentumSeries:
    times: np.ndarray
    A: np.ndarray

    @property
    def drift(self) -> float:
        """
        max_t |A(t) - A(0)|
        """
        return float(np.max(np.abs(self.A - self.A[0])))


@dataclass
class StrongCouplingResult:
    """
    Fixed points A = Phi(A) of the mean-control equation, the tabulated map
    and one solution per root.
    """

    A_grid: np.ndarray
    phi_of_A: np.ndarray
    A_roots: List[float]
    solutions: List[MfgSolution1D]
    u0: HjbTrajectory
    threshold: Optional[float] = None

    @property
    def gap(self) -> np.ndarray:
        return self.A_grid - self.phi_of_A

    @property
    def is_increasing(self) -> bool:
        """
        A -> A - Phi(A) is strictly increasing on the sampled scan.
        """
        return bool(np.all(np.diff(self.gap) > 0))


@dataclass
class SemiconcavityResult:
    holds: bool
    max_violation: float
    time: float
    tol: float


@dataclass
class LambdaSweepRow:
    lambda_disc: float
    u_l2_sup: float
    w1_max: float
    converged: bool
    picard_iterations: int
    failed: bool = False
    message: str = ""

    @property
    def is_sentinel(self) -> bool:
        return math.isinf(self.lambda_disc)


def _time_levels(horizon: float, dt: float) -> np.ndarray:
    if not horizon > 0:
        raise FieldException(f"horizon must be positive, got {horizon}")
    if not 0 < dt <= horizon:
        raise CflException(f"time step must lie in (0, horizon], got {dt}", 0.0, dt)
    times = np.concatenate(([0.0], np.cumsum(step_sizes(horizon, dt))))
    times[-1] = horizon
    return times


def _check_spacing(n: int, h: Optional[float]) -> float:
    if h is None:
        return 1.0 / n
    if abs(h * n - 1.0) > 1e-9:
        raise FieldException(f"spacing h={h} does not match a {n}-node circle")
    return 1.0 / n


def _as_density(m0: Union[ScalarField1D, np.ndarray]) -> np.ndarray:
    values = m0.values if isinstance(m0, ScalarField1D) else np.asarray(m0, dtype=float)
    if np.any(values < 0):
        raise FieldException("initial density has negative values")
    mass = values.mean()
    if abs(mass - 1.0) > 1e-8:
        raise FieldException(f"initial density must have unit mass, got {mass:.12g}")
    return np.array(values, dtype=float)


def _nodes(n: int) -> np.ndarray:
    return np.arange(n) / n


def _as_drift(B: DriftLike) -> Callable[[float, np.ndarray, np.ndarray], np.ndarray]:
    if callable(B):
        return B
    value = float(B)
    return lambda t, x, m: np.full_like(m, value)


def _fp_step(m: np.ndarray, b: np.ndarray, nu: float, h: float, dt: float, extra_rate: float, t: float) -> np.ndarray:
    # dm/dt = nu m'' + (b m)'; players are transported with velocity -b.
    v = -b
    m_next = np.roll(m, -1)
    v_next = np.roll(v, -1)
    centered = np.maximum(np.abs(v), np.abs(v_next)) * h <= 2.0 * nu
    v_face = 0.5 * (v + v_next)
    upwind = np.maximum(v_face, 0.0) * m + np.minimum(v_face, 0.0) * m_next
    central = 0.5 * (v * m + v_next * m_next)
    flux = np.where(centered, central, upwind) - nu * (m_next - m) / h

    # loss rate of each node, sets the positivity limit
    out_right = np.where(centered, 0.5 * v, np.maximum(v_face, 0.0))
    in_left = np.roll(np.where(centered, 0.5 * v_next, np.minimum(v_face, 0.0)), 1)
    rate = float(np.max(2.0 * nu / h + out_right - in_left)) / h + extra_rate
    if dt * rate > 1.0 + 1e-12:
        raise CflException(
            f"Fokker-Planck step dt={dt:.6g} exceeds the positivity limit {1.0 / rate:.6g} at t={t:.6g}",
            float(np.max(np.abs(b))),
            dt,
            1.0 / rate,
        )
    m_new = m - (dt / h) * (flux - np.roll(flux, 1))
    low = float(m_new.min())
    if low < _NEGATIVE_DENSITY:
        raise DensityException(f"negative density {low:.3e} at t={t + dt:.6g}", t + dt)
    return m_new


def _march_fp(
    drift_at: Callable[[int, float, np.ndarray], np.ndarray],
    nu: float,
    m0: np.ndarray,
    times: np.ndarray,
    h: float,
    extra_rate_at: Optional[Callable[[int, float, np.ndarray], float]] = None,
) -> np.ndarray:
    m = np.empty((times.size, m0.size))
    m[0] = m0
    for k in range(times.size - 1):
        t = times[k]
        size = times[k + 1] - t
        b = np.asarray(drift_at(k, t, m[k]), dtype=float)
        extra = extra_rate_at(k, t, m[k]) if extra_rate_at is not None else 0.0
        m[k + 1] = _fp_step(m[k], b, nu, h, size, extra, t)
        if isEnabledForTrace():
            trace(f"fp step {k}: t={times[k + 1]:.6g} mass={m[k + 1].sum() * h:.15g}")
    return m


def solve_fp(
    B: DriftLike,
    nu: float,
    m0: Union[ScalarField1D, np.ndarray],
    horizon: float,
    h: Optional[float] = None,
    dt: float = None,
) -> FpTrajectory:
    """
    Forward Fokker-Planck sweep dm/dt - nu m'' - (B m)' = 0 on the circle.

    Face fluxes are centered where the cell Peclet number |B| h / (2 nu) is
    at most one and upwind elsewhere. Mass is preserved to rounding and the
    density stays nonnegative whenever the step passes the positivity check.

    Parameters
    ----------
    B: float or callable
        constant drift, or (t, x, m) -> drift on all nodes
    nu: float
        nonnegative viscosity
    m0: ScalarField1D
        initial density
    horizon: float
        final time
    h: float
        grid spacing, must equal 1 / m0.n
    dt: float
        time step

    Returns
    ----------
    trajectory: FpTrajectory
    """
    if nu < 0:
        raise FieldException(f"viscosity must be nonnegative, got {nu}")
    m_init = _as_density(m0)
    h = _check_spacing(m_init.size, h)
    times = _time_levels(horizon, dt)
    drift = _as_drift(B)
    x = _nodes(m_init.size)
    m = _march_fp(lambda k, t, mk: drift(t, x, mk) * np.ones_like(mk), nu, m_init, times, h)
    debug(f"solve_fp: {times.size - 1} steps, final mass {m[-1].sum() * h:.15g}")
    return FpTrajectory(times, m)


def cole_hopf_hjb(phi: ScalarField1D, nu: float, horizon: float, dt: float) -> HjbTrajectory:
    """
    Solve -u_t - nu u'' + |u'|^2 / 2 = 0, u(T) = phi through u = -2 nu log w,
    w solving the backward heat equation from w(T) = exp(-phi / (2 nu)).

    Heat propagation is exact on the trigonometric interpolant of w(T), so
    the only errors are spatial sampling and the 1e-300 floor on w.

    Parameters
    ----------
    phi: ScalarField1D
        terminal data
    nu: float
        positive viscosity
    horizon: float
        terminal time T
    dt: float
        output time step

    Returns
    ----------
    trajectory: HjbTrajectory
    """
    if not nu > 0:
        raise FieldException(f"the logarithmic transform needs nu > 0, got {nu}")
    times = _time_levels(horizon, dt)
    values = phi.values
    n = values.size
    if np.ptp(values) == 0.0:
        return HjbTrajectory(times, np.tile(values, (times.size, 1)))

    floor = float(values.min())
    w_terminal = np.exp(-(values - floor) / (2.0 * nu))
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / n)
    spectrum = np.fft.fft(w_terminal)
    decay = np.exp(-nu * np.outer(horizon - times, k * k))
    w = np.real(np.fft.ifft(spectrum[None, :] * decay, axis=1))
    if w.min() < _W_FLOOR:
        warning(f"cole_hopf_hjb: w fell to {w.min():.3e}, floored at {_W_FLOOR:g}")
        w = np.maximum(w, _W_FLOOR)
    u = floor - 2.0 * nu * np.log(w)
    u[-1] = values
    return HjbTrajectory(times, u)


def hjb_residual(u_traj: HjbTrajectory, nu: float) -> float:
    """
    Sup-norm finite-difference residual of -u_t - nu u'' + |u'|^2 / 2,
    evaluated at the time midpoints.
    """
    h = u_traj.h
    u = u_traj.u
    worst = 0.0
    for k in range(u.shape[0] - 1):
        size = u_traj.times[k + 1] - u_traj.times[k]
        mid = 0.5 * (u[k] + u[k + 1])
        grad = periodic_gradient(mid, h)
        r = -(u[k + 1] - u[k]) / size - nu * periodic_laplacian(mid, h) + 0.5 * grad * grad
        worst = max(worst, float(np.max(np.abs(r))))
    return worst


def _picard_settings(picard: Optional[Dict]) -> Dict:
    settings = dict(DEFAULT_PICARD)
    if picard:
        unknown = set(picard) - set(DEFAULT_PICARD)
        if unknown:
            raise ConfigException(f"unknown Picard settings {sorted(unknown)}")
        settings.update(picard)
    if not 0 < settings["damping"] <= 1:
        raise ConfigException(f"Picard damping must lie in (0, 1], got {settings['damping']}")
    if int(settings["max_iter"]) < 1:
        raise ConfigException(f"Picard max_iter must be >= 1, got {settings['max_iter']}")
    if not settings["tol"] > 0:
        raise ConfigException(f"Picard tol must be positive, got {settings['tol']}")
    settings["max_iter"] = int(settings["max_iter"])
    return settings


def _terminal_values(terminal, m_final: np.ndarray) -> np.ndarray:
    if terminal is None:
        return np.zeros_like(m_final)
    if isinstance(terminal, ScalarField1D):
        values = terminal.values
    elif callable(terminal):
        values = np.asarray(terminal(m_final), dtype=float) * np.ones_like(m_final)
    else:
        values = np.asarray(terminal, dtype=float)
    if values.shape != m_final.shape:
        raise FieldException(f"terminal data has {values.size} nodes, expected {m_final.size}")
    return np.array(values, dtype=float)


def _hjb_sweep(
    H: HamiltonianSpec,
    lambda_disc: float,
    psi: Optional[Callable[[np.ndarray], np.ndarray]],
    nu: float,
    times: np.ndarray,
    h: float,
    m: np.ndarray,
    terminal,
) -> np.ndarray:
    x = _nodes(m.shape[1])
    u = np.empty_like(m)
    u[-1] = _terminal_values(terminal, m[-1])
    for k in range(times.size - 2, -1, -1):
        t = times[k + 1]
        size = t - times[k]
        after, m_after = u[k + 1], m[k + 1]
        p = periodic_gradient(after, h)
        rate = 2.0 * nu / (h * h) + float(np.max(np.abs(H.dp(t, x, p, m_after)))) / h + lambda_disc
        if size * rate > 1.0 + 1e-12:
            raise CflException(
                f"HJB step dt={size:.6g} exceeds the explicit limit {1.0 / rate:.6g} at t={t:.6g}",
                float(np.max(np.abs(H.dp(t, x, p, m_after)))),
                size,
                1.0 / rate,
            )
        target = after if psi is None else after - np.asarray(psi(m_after), dtype=float)
        u[k] = after + size * (nu * periodic_laplacian(after, h) - H.value(t, x, p, m_after) - lambda_disc * target)
        if not np.all(np.isfinite(u[k])):
            raise BlowUpException(f"HJB sweep blew up at t={times[k]:.6g}", times[k])
    return u


def _fp_given_value(H: HamiltonianSpec, nu: float, m0: np.ndarray, times: np.ndarray, h: float, u: np.ndarray) -> np.ndarray:
    x = _nodes(m0.size)

    def drift_at(k, t, mk):
        return H.dp(t, x, periodic_gradient(u[k], h), mk)

    return _march_fp(drift_at, nu, m0, times, h)


def solve_mfg_discounted(
    H: HamiltonianSpec,
    lambda_disc: float,
    psi: Optional[Callable[[np.ndarray], np.ndarray]],
    nu: float,
    horizon: float,
    m0: Union[ScalarField1D, np.ndarray],
    terminal=None,
    h: Optional[float] = None,
    dt: float = None,
    picard: Optional[Dict] = None,
    initial_guess: str = "heat",
) -> MfgSolution1D:
    """
    Damped Picard iteration on the discounted MFG system

        -u_t - nu u'' + H(x, u', m) + lambda (u - psi(m)) = 0,  u(T) = terminal
        m_t - nu m'' - (D_pH(x, u', m) m)' = 0,  m(0) = m0

    Each iteration runs a backward explicit HJB sweep given m and a forward
    Fokker-Planck sweep given u, then damps m <- theta m_new + (1 - theta) m.
    Non-convergence is reported through the converged flag.

    Parameters
    ----------
    H: HamiltonianSpec
        Hamiltonian
    lambda_disc: float
        nonnegative discount
    psi: callable
        local relative running cost m -> psi(m), None for psi = 0
    nu: float
        viscosity
    horizon: float
        final time T
    m0: ScalarField1D
        initial density
    terminal: ScalarField1D, array or callable
        fixed terminal field, or a local functional of m(T); zero when omitted
    h: float
        grid spacing, must equal 1 / m0.n
    dt: float
        time step
    picard: dict
        any of max_iter, damping, tol
    initial_guess: str
        "heat" (m0 under pure diffusion) or "uniform"

    Returns
    ----------
    solution: MfgSolution1D
    """
    if lambda_disc < 0:
        raise FieldException(f"discount must be nonnegative, got {lambda_disc}")
    if nu < 0:
        raise FieldException(f"viscosity must be nonnegative, got {nu}")
    if initial_guess not in INITIAL_GUESSES:
        raise ConfigException(f"initial guess must be one of {INITIAL_GUESSES}, got {initial_guess!r}")
    settings = _picard_settings(picard)
    m_init = _as_density(m0)
    h = _check_spacing(m_init.size, h)
    times = _time_levels(horizon, dt)

    if initial_guess == "heat":
        m_old = _march_fp(lambda k, t, mk: np.zeros_like(mk), nu, m_init, times, h)
    else:
        m_old = np.ones((times.size, m_init.size))
        m_old[0] = m_init

    theta = settings["damping"]
    u_old = None
    residuals: List[float] = []
    converged = False
    for iteration in range(1, settings["max_iter"] + 1):
        u_new = _hjb_sweep(H, lambda_disc, psi, nu, times, h, m_old, terminal)
        m_fp = _fp_given_value(H, nu, m_init, times, h, u_new)
        m_new = theta * m_fp + (1.0 - theta) * m_old
        gap_u = math.inf if u_old is None else float(np.max(np.abs(u_new - u_old)))
        gap = max(gap_u, float(np.max(np.abs(m_new - m_old))))
        residuals.append(gap)
        debug(f"picard iteration {iteration}: residual {gap:.3e}")
        u_old, m_old = u_new, m_new
        if gap <= settings["tol"]:
            converged = True
            break

    if not converged:
        warning(
            f"solve_mfg_discounted: no convergence after {settings['max_iter']} Picard iterations, "
            f"last residual {residuals[-1]:.3e}"
        )
    settings = dict(settings, initial_guess=initial_guess, dt=dt, h=h, lambda_disc=lambda_disc, nu=nu)
    return MfgSolution1D(times, u_old, m_old, len(residuals), residuals, converged, settings)


def effective_diffusion(
    H: Separable, lambda_disc: float, nu: float, m: np.ndarray, p: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    Pointwise coefficient nu - m D_zH D_ppH / lambda of the corrected
    Fokker-Planck equation.

    Parameters
    ----------
    H: Separable
        separable Hamiltonian
    lambda_disc: float
        positive discount
    nu: float
        viscosity
    m: array
        density values
    p: array
        momentum at which D_ppH is taken, 0 when omitted
    """
    if not isinstance(H, Separable):
        raise CouplingException("the effective diffusion is defined for separable Hamiltonians")
    if not lambda_disc > 0:
        raise FieldException(f"discount must be positive, got {lambda_disc}")
    m = np.asarray(m, dtype=float)
    p = np.zeros_like(m) if p is None else np.asarray(p, dtype=float)
    return nu - m * H.dz(0.0, None, p, m) * H.dpp(0.0, None, p, m) / lambda_disc


def _march_potential_drift(
    H: HamiltonianSpec,
    potential: Callable[[float, np.ndarray, np.ndarray], np.ndarray],
    nu: float,
    m_init: np.ndarray,
    times: np.ndarray,
    h: float,
    check: Optional[Callable[[float, np.ndarray, np.ndarray, np.ndarray], None]] = None,
) -> np.ndarray:
    # drift D_pH(x, grad P(m), m) for a local potential P; its implicit
    # diffusion m P'(m) D_ppH enters the stability limit
    x = _nodes(m_init.size)

    def drift_at(k, t, mk):
        p = periodic_gradient(potential(t, x, mk), h)
        if check is not None:
            check(t, x, mk, p)
        return H.dp(t, x, p, mk)

    def extra_rate_at(k, t, mk):
        p = periodic_gradient(potential(t, x, mk), h)
        slope = _local_derivative(lambda z: potential(t, x, z), mk)
        implicit = mk * slope * H.dpp(t, x, p, mk)
        return 2.0 * max(float(np.max(implicit)), 0.0) / (h * h)

    return _march_fp(drift_at, nu, m_init, times, h, extra_rate_at)


def solve_fp_higher_order(
    H: Separable,
    lambda_disc: float,
    nu: float,
    m0: Union[ScalarField1D, np.ndarray],
    horizon: float,
    h: Optional[float] = None,
    dt: float = None,
) -> FpTrajectory:
    """
    Fokker-Planck equation corrected to first order in 1 / lambda: the drift
    is D_pH(x, grad(-H(x, 0, m) / lambda), m).

    Every step checks that the effective diffusion stays nonnegative and
    raises EffectiveDiffusionException with the offending (x, m) otherwise.
    """
    if not isinstance(H, Separable):
        raise CouplingException("the higher order correction needs a separable Hamiltonian")
    if not lambda_disc > 0:
        raise FieldException(f"discount must be positive, got {lambda_disc}")
    m_init = _as_density(m0)
    h = _check_spacing(m_init.size, h)
    times = _time_levels(horizon, dt)

    def potential(t, x, m):
        return -H.value(t, x, np.zeros_like(m), m) / lambda_disc

    def check(t, x, m, p):
        coefficient = effective_diffusion(H, lambda_disc, nu, m, p)
        worst = int(np.argmin(coefficient))
        if coefficient[worst] < 0:
            raise EffectiveDiffusionException(
                f"effective diffusion {coefficient[worst]:.3e} < 0 at t={t:.6g}", float(x[worst]), float(m[worst])
            )

    m = _march_potential_drift(H, potential, nu, m_init, times, h, check)
    return FpTrajectory(times, m)


def solve_fp_relative_cost(
    H: HamiltonianSpec,
    psi: Callable[[np.ndarray], np.ndarray],
    nu: float,
    m0: Union[ScalarField1D, np.ndarray],
    horizon: float,
    h: Optional[float] = None,
    dt: float = None,
) -> FpTrajectory:
    """
    Agent-based limit of the relative running cost model: drift
    D_pH(x, grad psi(m), m).
    """
    m_init = _as_density(m0)
    h = _check_spacing(m_init.size, h)
    times = _time_levels(horizon, dt)
    m = _march_potential_drift(H, lambda t, x, mk: np.asarray(psi(mk), dtype=float) * np.ones_like(mk), nu, m_init, times, h)
    return FpTrajectory(times, m)


def conserved_momentum(sol: MfgSolution1D) -> MomentumSeries:
    """
    A(t) = h sum u'(t) m(t), with u' the centered difference.
    """
    h = sol.h
    grad = (np.roll(sol.u, -1, axis=1) - np.roll(sol.u, 1, axis=1)) / (2.0 * h)
    return MomentumSeries(sol.times, h * np.sum(grad * sol.m, axis=1))


def uniqueness_threshold(c: float, horizon: float) -> float:
    """
    (1 + c T) / (c T); below this strength the mean-control fixed point is
    unique. c = inf gives 1.
    """
    if not c > 0 or not horizon > 0:
        raise FieldException(f"c and T must be positive, got c={c}, T={horizon}")
    if math.isinf(c):
        return 1.0
    return (1.0 + c * horizon) / (c * horizon)


def semiconcavity_check(u_traj: HjbTrajectory, c: float) -> SemiconcavityResult:
    """
    Compare second differences of u0(t) with c / (1 + c (T - t)) at every
    time, tolerance 10 (h^2 + dt).
    """
    h = u_traj.h
    horizon = u_traj.horizon
    dt = float(np.max(np.diff(u_traj.times))) if u_traj.times.size > 1 else 0.0
    tol = 10.0 * (h * h + dt)
    second = (np.roll(u_traj.u, -1, axis=1) - 2.0 * u_traj.u + np.roll(u_traj.u, 1, axis=1)) / (h * h)
    bound = c / (1.0 + c * (horizon - u_traj.times))
    if np.max(second[-1]) > c + tol:
        warning(f"terminal data is not {c:g}-semiconcave on the grid")
    excess = np.max(second, axis=1) - bound
    worst = int(np.argmax(excess))
    return SemiconcavityResult(bool(excess[worst] <= tol), float(excess[worst]), float(u_traj.times[worst]), tol)


def _scan_settings(scan: Optional[Dict]) -> Dict:
    settings = dict(DEFAULT_SCAN)
    if scan:
        unknown = set(scan) - set(DEFAULT_SCAN)
        if unknown:
            raise ConfigException(f"unknown scan settings {sorted(unknown)}")
        settings.update(scan)
    if not settings["A_max"] > settings["A_min"]:
        raise ConfigException(f"scan range is empty: [{settings['A_min']}, {settings['A_max']}]")
    if int(settings["n_scan"]) < 2:
        raise ConfigException(f"n_scan must be >= 2, got {settings['n_scan']}")
    settings["n_scan"] = int(settings["n_scan"])
    return settings


def _bisect(gap: Callable[[float], float], a: float, b: float, ga: float) -> float:
    while b - a > _ROOT_TOL:
        mid = 0.5 * (a + b)
        gm = gap(mid)
        if gm == 0.0:
            return mid
        if (gm < 0) == (ga < 0):
            a, ga = mid, gm
        else:
            b = mid
    return 0.5 * (a + b)


def scan_mean_control(
    u0: HjbTrajectory,
    m0: Union[ScalarField1D, np.ndarray],
    lambda_ctrl: float,
    scan: Optional[Dict] = None,
) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    """
    Tabulate Phi(A) = h sum u0'(x + lambda A T, 0) m0(x) on the scan range
    and locate the fixed points A = Phi(A).

    Exact zeros of A - Phi(A) on the scan are roots; each sign change is
    refined by bisection down to an interval of 1e-10.

    Returns
    ----------
    (A_grid, phi_of_A, roots)
    """
    settings = _scan_settings(scan)
    m_init = m0.values if isinstance(m0, ScalarField1D) else np.asarray(m0, dtype=float)
    h = u0.h
    horizon = u0.horizon
    grad0 = periodic_gradient(u0.u[0], h)

    def phi_of(a: float) -> float:
        return float(h * np.sum(periodic_shift(grad0, lambda_ctrl * a * horizon) * m_init))

    def gap(a: float) -> float:
        return a - phi_of(a)

    grid = np.linspace(settings["A_min"], settings["A_max"], settings["n_scan"])
    tabulated = np.array([phi_of(a) for a in grid])
    gaps = grid - tabulated
    roots: List[float] = []
    for i in range(grid.size):
        if gaps[i] == 0.0:
            roots.append(float(grid[i]))
        elif i + 1 < grid.size and gaps[i] * gaps[i + 1] < 0:
            roots.append(_bisect(gap, float(grid[i]), float(grid[i + 1]), float(gaps[i])))
    return grid, tabulated, roots


def solve_strong_coupling(
    phi: ScalarField1D,
    m0: Union[ScalarField1D, np.ndarray],
    lambda_ctrl: float,
    nu: float,
    horizon: float,
    h: Optional[float] = None,
    dt: float = None,
    scan: Optional[Dict] = None,
    c: Optional[float] = None,
) -> StrongCouplingResult:
    """
    Strongly coupled model with Hamiltonian |p|^2 / 2 - lambda A p, where
    A = int u' m is the mean control.

    A is conserved, so every solution is a translate of the decoupled HJB
    solution, u(t, x) = u0(t, x + lambda A (T - t)), with A a fixed point of
    Phi(A) = int u0'(x + lambda A T, 0) m0(x) dx. Sign changes of A - Phi(A)
    on the scan are refined by bisection; each root is rebuilt by the shift
    formula and a Fokker-Planck sweep with drift u' - lambda A.

    Parameters
    ----------
    phi: ScalarField1D
        terminal data of u
    m0: ScalarField1D
        initial density
    lambda_ctrl: float
        strength of the mean-control term
    nu: float
        positive viscosity
    horizon: float
        final time T
    h: float
        grid spacing, must equal 1 / phi.n
    dt: float
        time step shared by the HJB oracle and the Fokker-Planck sweep
    scan: dict
        any of A_min, A_max, n_scan
    c: float
        semiconcavity constant of phi, used for the reported threshold

    Returns
    ----------
    result: StrongCouplingResult
    """
    settings = _scan_settings(scan)
    m_init = _as_density(m0)
    if m_init.size != phi.n:
        raise FieldException(f"phi has {phi.n} nodes, m0 has {m_init.size}")
    h = _check_spacing(m_init.size, h)
    if not np.all(np.isfinite(np.diff(phi.values) / h)):
        raise FieldException("terminal data is not Lipschitz on the grid")

    u0 = cole_hopf_hjb(phi, nu, horizon, dt)
    times = u0.times
    grid, tabulated, roots = scan_mean_control(u0, m_init, lambda_ctrl, settings)
    if not roots:
        warning(f"no fixed point of the mean control on [{settings['A_min']}, {settings['A_max']}]")

    solutions = []
    for root in roots:
        u = np.array([periodic_shift(u0.u[k], lambda_ctrl * root * (horizon - t)) for k, t in enumerate(times)])

        def drift_at(k, t, mk, u=u, root=root):
            return periodic_gradient(u[k], h) - lambda_ctrl * root

        m = _march_fp(drift_at, nu, m_init, times, h)
        solutions.append(
            MfgSolution1D(times, u, m, 0, [], True, {"A": root, "lambda_ctrl": lambda_ctrl, "nu": nu, "dt": dt, "h": h})
        )
    debug(f"solve_strong_coupling: {len(roots)} root(s) {roots}")
    threshold = uniqueness_threshold(c, horizon) if c is not None else None
    return StrongCouplingResult(grid, tabulated, roots, solutions, u0, threshold)


def _l2_sup(u: np.ndarray, h: float) -> float:
    return float(np.max(np.sqrt(h * np.sum(u * u, axis=1))))


def _w1_max(m_a: np.ndarray, m_b: np.ndarray) -> float:
    return max(wasserstein1_periodic(ScalarField1D(a), ScalarField1D(b)) for a, b in zip(m_a, m_b))


def lambda_sweep(
    lambdas: Sequence[float],
    H: HamiltonianSpec,
    nu: float,
    m0: Union[ScalarField1D, np.ndarray],
    horizon: float,
    h: Optional[float] = None,
    dt: float = None,
    terminal=None,
    psi: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    picard: Optional[Dict] = None,
    threads: Optional[int] = None,
) -> List[LambdaSweepRow]:
    """
    Run the discounted MFG for every lambda and compare with its agent-based
    limit.

    Each row holds sup_t |u_lambda(t)|_2 and max_t W1(m_lambda(t), m_inf(t)),
    where m_inf solves the Fokker-Planck equation with drift D_pH(t, x, 0, m)
    (with drift D_pH(x, grad psi(m), m) when psi is given). A final row with
    lambda = inf is the limit itself. Failed rows carry a message and NaN
    statistics; the table is always returned.
    """
    m_init = _as_density(m0)
    h = _check_spacing(m_init.size, h)
    times = _time_levels(horizon, dt)
    x = _nodes(m_init.size)
    if psi is None:
        m_limit = _march_fp(lambda k, t, mk: H.dp(t, x, np.zeros_like(mk), mk), nu, m_init, times, h)
    else:
        m_limit = _march_potential_drift(
            H, lambda t, xx, mk: np.asarray(psi(mk), dtype=float) * np.ones_like(mk), nu, m_init, times, h
        )

    def run(lambda_disc: float) -> LambdaSweepRow:
        try:
            sol = solve_mfg_discounted(H, lambda_disc, psi, nu, horizon, m_init, terminal, h, dt, picard)
        except MfgLabException as e:
            warning(f"lambda sweep row {lambda_disc:g} failed: {e}")
            return LambdaSweepRow(lambda_disc, math.nan, math.nan, False, 0, True, str(e))
        return LambdaSweepRow(
            lambda_disc,
            _l2_sup(sol.u, h),
            _w1_max(sol.m, m_limit),
            sol.converged,
            sol.picard_iterations,
            not sol.converged,
            "" if sol.converged else "Picard iteration did not converge",
        )

    rows = parallel_map(run, [float(v) for v in lambdas], threads or getdefaultthreads())
    rows.append(LambdaSweepRow(math.inf, 0.0, 0.0, True, 0))
    return rows
