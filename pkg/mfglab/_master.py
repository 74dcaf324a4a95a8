import math
import dataclasses
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ._defaults import MAX_OUTPUT_SLICES, getdefaultblowupfactor
from ._exceptions import (
    BlowUpException,
    CflException,
    CouplingException,
    FieldException,
    NoiseException,
    SingularJumpException,
)
from ._grid import (
    Grid,
    ValueField,
    interpolate_points,
    interpolate_stack,
    mixed_differences,
    second_differences,
    upwind_transport,
)
from ._logging import debug, isEnabledForTrace, trace
from ._utils import step_sizes

"""
_master.py
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
    "LinearBlock",
    "ConvexGradient",
    "Unverified",
    "Coupling",
    "AffineJump",
    "NoiseSpec",
    "NoNoise",
    "DeterministicJump",
    "CommonPoisson",
    "IidPoisson",
    "Mixture",
    "CombinedNoise",
    "Trajectory",
    "jump_pullback",
    "step_master",
    "solve_master",
    "solve_asymptotic",
    "symmetric_jump_pair",
]

# relative slack on CFL numbers
_CFL_SLACK = 1e-12
_PSD_TOL = 1e-12

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LinearBlock:
    """
    G(x, u) = A x + B u and F(x, u) = C x + D u.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def block(self) -> np.ndarray:
        return np.block([[self.A, self.B], [self.C, self.D]])

    def symmetric_part(self) -> np.ndarray:
        block = self.block()
        return 0.5 * (block + block.T)


@dataclass(frozen=True)
class ConvexGradient:
    """
    (G, F) is the gradient of a convex potential on R^2d.
    """

    potential: Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Unverified:
    pass


Certificate = Union[LinearBlock, ConvexGradient, Unverified]


def _square(matrix: np.ndarray, d: int, name: str) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape != (d, d):
        raise CouplingException(f"{name} has shape {matrix.shape}, expected {(d, d)}")
    return matrix


class Coupling:
    """
    The pair (F, G) of the master equation dU/dt + (F(x,U).grad)U = G(x,U).

    Evaluators are vectorised: they receive node coordinates and values as
    arrays of shape (N, d) and return (N, d).

    Parameters
    ----------
    F: callable
        drift evaluator (x, u) -> F(x, u)
    G: callable
        source evaluator (x, u) -> G(x, u)
    dim: int
        state dimension d
    lip_F_x, lip_F_u, lip_G_x, lip_G_u: float
        Lipschitz constants of F and G in each argument
    certificate: LinearBlock, ConvexGradient or Unverified
        why (G, F) is monotone, if it is
    """

    def __init__(
        self,
        F: Evaluator,
        G: Evaluator,
        dim: int,
        lip_F_x: float = 0.0,
        lip_F_u: float = 0.0,
        lip_G_x: float = 0.0,
        lip_G_u: float = 0.0,
        certificate: Certificate = None,
    ) -> None:
        for name, value in (
            ("lip_F_x", lip_F_x),
            ("lip_F_u", lip_F_u),
            ("lip_G_x", lip_G_x),
            ("lip_G_u", lip_G_u),
        ):
            if not value >= 0:
                raise CouplingException(f"{name} must be nonnegative, got {value}")
        self.F = F
        self.G = G
        self.dim = int(dim)
        self.lip_F_x = float(lip_F_x)
        self.lip_F_u = float(lip_F_u)
        self.lip_G_x = float(lip_G_x)
        self.lip_G_u = float(lip_G_u)
        self.certificate = Unverified() if certificate is None else certificate

    def __repr__(self) -> str:
        return f"Coupling(dim={self.dim}, certificate={type(self.certificate).__name__})"

    @classmethod
    def linear(
        cls,
        A: np.ndarray,
        B: np.ndarray,
        C: np.ndarray,
        D: np.ndarray,
        require_monotone: bool = True,
    ) -> "Coupling":
        """
        Linear coupling G = Ax + Bu, F = Cx + Du.

        With require_monotone the symmetric part of [[A, B], [C, D]] must be
        positive semidefinite, otherwise CouplingException is raised.
        """
        A = np.atleast_2d(np.asarray(A, dtype=float))
        d = A.shape[0]
        A = _square(A, d, "A")
        B = _square(B, d, "B")
        C = _square(C, d, "C")
        D = _square(D, d, "D")
        block = LinearBlock(A, B, C, D)
        smallest = float(np.linalg.eigvalsh(block.symmetric_part())[0])
        scale = max(1.0, float(np.max(np.abs(block.block()))))
        if smallest < -_PSD_TOL * scale:
            if require_monotone:
                raise CouplingException(
                    f"linear block is not monotone, smallest symmetric eigenvalue {smallest:.3e}"
                )
            certificate: Certificate = Unverified()
        else:
            certificate = block

        def G(x: np.ndarray, u: np.ndarray) -> np.ndarray:
            return x @ A.T + u @ B.T

        def F(x: np.ndarray, u: np.ndarray) -> np.ndarray:
            return x @ C.T + u @ D.T

        return cls(
            F,
            G,
            d,
            lip_F_x=np.linalg.norm(C, 2),
            lip_F_u=np.linalg.norm(D, 2),
            lip_G_x=np.linalg.norm(A, 2),
            lip_G_u=np.linalg.norm(B, 2),
            certificate=certificate,
        )

    @classmethod
    def zero(cls, dim: int) -> "Coupling":
        """
        F = 0, G = 0.
        """
        zeros = np.zeros((dim, dim))
        return cls.linear(zeros, zeros, zeros, zeros)

    @property
    def is_certified(self) -> bool:
        return not isinstance(self.certificate, Unverified)

    def drift(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.F(x, u), dtype=float), x.shape)

    def source(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.G(x, u), dtype=float), x.shape)


class AffineJump:
    """
    Affine jump map T(x) = S x + e of the population state.

    Parameters
    ----------
    S: array of shape (d, d)
        linear part, also the transpose of the pullback matrix
    e: array of shape (d,)
        offset, zero when omitted
    """

    def __init__(self, S: np.ndarray, e: Optional[np.ndarray] = None) -> None:
        S = np.atleast_2d(np.array(S, dtype=float))
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise NoiseException(f"jump matrix must be square, got shape {S.shape}")
        d = S.shape[0]
        e = np.zeros(d) if e is None else np.array(e, dtype=float).reshape(-1)
        if e.shape != (d,):
            raise NoiseException(f"jump offset has shape {e.shape}, expected {(d,)}")
        if not (np.all(np.isfinite(S)) and np.all(np.isfinite(e))):
            raise NoiseException("jump map must be finite")
        S.setflags(write=False)
        e.setflags(write=False)
        self.S = S
        self.e = e
        self.op_norm_S = float(np.linalg.norm(S, 2))

    def __repr__(self) -> str:
        return f"AffineJump(S={self.S.tolist()}, e={self.e.tolist()})"

    @classmethod
    def identity(cls, dim: int) -> "AffineJump":
        return cls(np.eye(dim))

    @classmethod
    def swap(cls, dim: int, i: int = 0, j: int = 1) -> "AffineJump":
        """
        Exchange the players of states i and j.
        """
        S = np.eye(dim)
        S[[i, j]] = S[[j, i]]
        return cls(S)

    @classmethod
    def split_half(cls, dim: int, delta: float) -> "AffineJump":
        """
        Half of the players of the first state move to the second one and
        delta new players enter the first state.
        """
        if dim < 2:
            raise NoiseException("split_half needs at least two states")
        S = np.eye(dim)
        S[0, 0] = 0.5
        S[1, 0] = 0.5
        e = np.zeros(dim)
        e[0] = delta
        return cls(S, e)

    @property
    def dim(self) -> int:
        return self.S.shape[0]

    @property
    def pullback_matrix(self) -> np.ndarray:
        return self.S.T

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.S))

    def apply(self, x: np.ndarray) -> np.ndarray:
        """
        T applied to points of shape (..., d).
        """
        return np.asarray(x, dtype=float) @ self.S.T + self.e

    def partial(self, theta: float) -> "AffineJump":
        """
        theta T + (1 - theta) Id, the jump when only a proportion theta of the
        players move.
        """
        if not 0.0 <= theta <= 1.0:
            raise NoiseException(f"proportion must lie in [0, 1], got {theta}")
        eye = np.eye(self.dim)
        return AffineJump(theta * self.S + (1.0 - theta) * eye, theta * self.e)

    def inverse(self) -> "AffineJump":
        cond = self.condition_number
        if not np.isfinite(cond) or cond > 1e12:
            raise SingularJumpException(
                f"jump matrix is not invertible (condition number {cond:.3e})", cond
            )
        S_inv = np.linalg.inv(self.S)
        return AffineJump(S_inv, -S_inv @ self.e)

    def power_iteration_norm(self, iterations: int = 1000, seed: int = 0) -> float:
        """
        Estimate of the operator norm of S by power iteration on S^T S.
        """
        if not np.any(self.S):
            return 0.0
        v = np.random.default_rng(seed).standard_normal(self.dim)
        v /= np.linalg.norm(v)
        gram = self.S.T @ self.S
        estimate = 0.0
        for _ in range(iterations):
            w = gram @ v
            norm = np.linalg.norm(w)
            if norm == 0.0:
                break
            v = w / norm
            previous, estimate = estimate, math.sqrt(norm)
            if abs(estimate - previous) <= 1e-15 * max(estimate, 1.0):
                break
        return float(np.linalg.norm(self.S @ v))

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.S, np.eye(self.dim)) and not np.any(self.e))


def jump_pullback(field: ValueField, jump: AffineJump) -> ValueField:
    """
    x -> S^T U(S x + e), with U evaluated by clamped multilinear interpolation.
    """
    grid = field.grid
    landed = interpolate_points(field, jump.apply(grid.flat_coordinates))
    return ValueField(grid, (landed @ jump.S).reshape(field.values.shape))


class NoiseSpec:
    """
    Common noise acting on the population.

    Subclasses contribute an extra transport drift, a zero-order term and
    deterministic jump times to the explicit scheme.
    """

    def extra_drift(self, x: np.ndarray) -> Optional[np.ndarray]:
        return None

    def zero_order(self, field: ValueField) -> Optional[np.ndarray]:
        """
        Terms added to the left hand side, flat shape (N, d).
        """
        return None

    def relaxation_rate(self) -> float:
        """
        Bound on the diagonal rate of zero_order, enters the CFL number.
        """
        return 0.0

    def deterministic_jumps(self) -> List["DeterministicJump"]:
        return []

    def describe(self) -> Dict:
        return {"kind": "none"}


class NoNoise(NoiseSpec):
    pass


def _check_rate(rate: float) -> float:
    rate = float(rate)
    if not rate >= 0.0 or not math.isfinite(rate):
        raise NoiseException(f"jump rate must be finite and nonnegative, got {rate}")
    return rate


class DeterministicJump(NoiseSpec):
    """
    Every player is hit by J at the deterministic time t1.
    """

    def __init__(self, t1: float, jump: AffineJump) -> None:
        if not t1 > 0.0:
            raise NoiseException(f"jump time must be positive, got {t1}")
        self.t1 = float(t1)
        self.jump = jump

    def deterministic_jumps(self) -> List["DeterministicJump"]:
        return [self]

    def describe(self) -> Dict:
        return {"kind": "deterministic_jump", "t1": self.t1, "S": self.jump.S.tolist(), "e": self.jump.e.tolist()}


class CommonPoisson(NoiseSpec):
    """
    Every player is hit by J at the jump times of one Poisson process.
    """

    def __init__(self, rate: float, jump: AffineJump) -> None:
        self.rate = _check_rate(rate)
        self.jump = jump

    def zero_order(self, field: ValueField) -> Optional[np.ndarray]:
        if self.rate == 0.0:
            return None
        return self.rate * (field.flat - jump_pullback(field, self.jump).flat)

    def relaxation_rate(self) -> float:
        return self.rate

    def describe(self) -> Dict:
        return {"kind": "common_poisson", "rate": self.rate, "S": self.jump.S.tolist(), "e": self.jump.e.tolist()}


class IidPoisson(NoiseSpec):
    """
    Each player jumps with J at the times of its own Poisson process.

    In the continuum this is a deterministic flow of players: an extra drift
    rate (x - T x) and a zero-order term rate (Id - S^T) U.
    """

    def __init__(self, rate: float, jump: AffineJump) -> None:
        self.rate = _check_rate(rate)
        self.jump = jump

    def extra_drift(self, x: np.ndarray) -> Optional[np.ndarray]:
        if self.rate == 0.0:
            return None
        return self.rate * (x - self.jump.apply(x))

    def zero_order(self, field: ValueField) -> Optional[np.ndarray]:
        if self.rate == 0.0:
            return None
        return self.rate * (field.flat - field.flat @ self.jump.S)

    def relaxation_rate(self) -> float:
        return self.rate

    def describe(self) -> Dict:
        return {"kind": "iid_poisson", "rate": self.rate, "S": self.jump.S.tolist(), "e": self.jump.e.tolist()}


class Mixture(NoiseSpec):
    """
    Common Poisson noise whose jump is drawn from a finite set of affine maps.

    Parameters
    ----------
    rate: float
        intensity of the jump times
    atoms: sequence of (AffineJump, weight)
        weights are nonnegative and sum to 1
    """

    def __init__(self, rate: float, atoms: Sequence[Tuple[AffineJump, float]]) -> None:
        self.rate = _check_rate(rate)
        atoms = [(jump, float(weight)) for jump, weight in atoms]
        if not atoms:
            raise NoiseException("a mixture needs at least one atom")
        if any(weight < 0.0 for _, weight in atoms):
            raise NoiseException("mixture weights must be nonnegative")
        total = sum(weight for _, weight in atoms)
        if abs(total - 1.0) > 1e-12:
            raise NoiseException(f"mixture weights sum to {total!r}, expected 1")
        self.atoms = atoms

    def zero_order(self, field: ValueField) -> Optional[np.ndarray]:
        if self.rate == 0.0:
            return None
        out = np.zeros_like(field.flat)
        for jump, weight in self.atoms:
            out += weight * (field.flat - jump_pullback(field, jump).flat)
        return self.rate * out

    def relaxation_rate(self) -> float:
        return self.rate

    def describe(self) -> Dict:
        return {
            "kind": "mixture",
            "rate": self.rate,
            "atoms": [
                {"S": jump.S.tolist(), "e": jump.e.tolist(), "weight": weight}
                for jump, weight in self.atoms
            ],
        }


class CombinedNoise(NoiseSpec):
    """
    Several noise sources acting together; their terms add up.
    """

    def __init__(self, parts: Sequence[NoiseSpec]) -> None:
        self.parts = list(parts)

    def extra_drift(self, x: np.ndarray) -> Optional[np.ndarray]:
        drifts = [d for d in (part.extra_drift(x) for part in self.parts) if d is not None]
        return sum(drifts) if drifts else None

    def zero_order(self, field: ValueField) -> Optional[np.ndarray]:
        terms = [z for z in (part.zero_order(field) for part in self.parts) if z is not None]
        return sum(terms) if terms else None

    def relaxation_rate(self) -> float:
        return sum(part.relaxation_rate() for part in self.parts)

    def deterministic_jumps(self) -> List[DeterministicJump]:
        jumps = []
        for part in self.parts:
            jumps.extend(part.deterministic_jumps())
        return sorted(jumps, key=lambda jump: jump.t1)

    def describe(self) -> Dict:
        return {"kind": "combined", "parts": [part.describe() for part in self.parts]}


def symmetric_jump_pair(S: np.ndarray, eps: float) -> Mixture:
    """
    The two-atom mixture {Id + eps S, Id - eps S} with weights 1/2 and rate
    2 / eps^2, whose small-eps limit is the second order operator.
    """
    if not eps > 0.0:
        raise NoiseException(f"eps must be positive, got {eps}")
    S = np.atleast_2d(np.asarray(S, dtype=float))
    eye = np.eye(S.shape[0])
    atoms = [(AffineJump(eye + eps * S), 0.5), (AffineJump(eye - eps * S), 0.5)]
    return Mixture(2.0 / eps ** 2, atoms)


@dataclass
class Trajectory:
    """
    Output slices of a time-marched master equation.

    Both sides of a deterministic jump are recorded under the same time, so
    `times` is nondecreasing with one repeated entry per jump.
    """

    times: List[float]
    fields: List[ValueField]
    scheme_meta: Dict = dataclasses.field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.times) != len(self.fields) or not self.fields:
            raise FieldException("a trajectory needs one field per output time")
        grid = self.fields[0].grid
        if any(f.grid != grid for f in self.fields):
            raise FieldException("all trajectory fields must share one grid")
        self._stack: Optional[np.ndarray] = None

    @property
    def grid(self) -> Grid:
        return self.fields[0].grid

    @property
    def final(self) -> ValueField:
        return self.fields[-1]

    def index_at(self, t: float) -> int:
        """
        Index of the last slice recorded at or before t.
        """
        times = np.asarray(self.times)
        return int(max(np.searchsorted(times, t + 1e-12, side="right") - 1, 0))

    def evaluate(self, t: float, points: np.ndarray) -> np.ndarray:
        """
        U(t, points), linear in time between recorded slices and multilinear
        in space. After a deterministic jump the post-jump slice is used.
        """
        times = self.times
        i = self.index_at(t)
        if i + 1 >= len(times) or times[i + 1] <= times[i] or t <= times[i]:
            return interpolate_points(self.fields[i], points)
        weight = (t - times[i]) / (times[i + 1] - times[i])
        left = interpolate_points(self.fields[i], points)
        right = interpolate_points(self.fields[i + 1], points)
        return (1.0 - weight) * left + weight * right

    def evaluate_many(self, t: np.ndarray, points: np.ndarray) -> np.ndarray:
        """
        U(t[i], points[i]) for per-point times, same conventions as evaluate.
        """
        if self._stack is None:
            self._stack = np.stack([f.values for f in self.fields])
        times = np.asarray(self.times)
        t = np.asarray(t, dtype=float).reshape(-1)
        left = np.clip(np.searchsorted(times, t + 1e-12, side="right") - 1, 0, len(times) - 1)
        right = np.minimum(left + 1, len(times) - 1)
        span = times[right] - times[left]
        inside = (right > left) & (span > 0) & (t > times[left])
        weight = np.where(inside, (t - times[left]) / np.where(span > 0, span, 1.0), 0.0)
        right = np.where(inside, right, left)
        a = interpolate_stack(self.grid, self._stack, left, points)
        b = interpolate_stack(self.grid, self._stack, right, points)
        return (1.0 - weight)[:, None] * a + weight[:, None] * b


def _cfl_number(drift: np.ndarray, spacing: np.ndarray, zero_rate: float, dt: float) -> Tuple[float, float]:
    rate = np.sum(np.abs(drift) / spacing, axis=-1)
    return dt * (float(np.max(rate)) + zero_rate), float(np.max(np.abs(drift)))


def _check_cfl(cfl: float, max_drift: float, dt: float) -> None:
    if cfl > 1.0 + _CFL_SLACK:
        limit = dt / cfl
        raise CflException(
            f"time step {dt} violates the CFL bound (CFL number {cfl:.6g}, "
            f"max drift {max_drift:.6g}, largest admissible dt {limit:.6g})",
            max_drift,
            dt,
            limit,
        )


def _master_rhs(
    field: ValueField, coupling: Coupling, noise: NoiseSpec, discount: float
) -> Tuple[np.ndarray, np.ndarray]:
    grid = field.grid
    x = grid.flat_coordinates
    u = field.flat
    drift = coupling.drift(x, u)
    extra = noise.extra_drift(x)
    if extra is not None:
        drift = drift + extra
    transport = upwind_transport(
        field.values, drift.reshape(field.values.shape), grid.spacing
    ).reshape(u.shape)
    rhs = coupling.source(x, u) - transport
    if discount:
        rhs = rhs - discount * u
    zero = noise.zero_order(field)
    if zero is not None:
        rhs = rhs - zero
    return rhs, drift


def step_master(
    field: ValueField,
    coupling: Coupling,
    noise: NoiseSpec,
    t: float,
    dt: float,
    discount: float = 0.0,
) -> ValueField:
    """
    One explicit upwind step of

        dU/dt + (F(x,U).grad)U + discount U + [noise terms] = G(x,U).

    Parameters
    ----------
    field: ValueField
        U at time t
    coupling: Coupling
        the pair (F, G)
    noise: NoiseSpec
        Poisson and mixture terms enter the step; deterministic jumps are
        applied by solve_master between steps
    t: float
        current time
    dt: float
        time step, checked against the CFL bound
    discount: float
        nonnegative zero-order coefficient

    Returns
    ----------
    field: ValueField
        U at time t + dt
    """
    if noise is None:
        noise = NoNoise()
    if discount < 0:
        raise NoiseException(f"discount must be nonnegative, got {discount}")
    return _explicit_master_step(field, coupling, noise, t, dt, discount)[0]


def _explicit_master_step(
    field: ValueField,
    coupling: Coupling,
    noise: NoiseSpec,
    t: float,
    dt: float,
    discount: float,
) -> Tuple[ValueField, float]:
    rhs, drift = _master_rhs(field, coupling, noise, discount)
    cfl, max_drift = _cfl_number(
        drift, field.grid.spacing, noise.relaxation_rate() + discount, dt
    )
    _check_cfl(cfl, max_drift, dt)
    values = field.flat + dt * rhs
    if not np.all(np.isfinite(values)):
        raise BlowUpException(f"non-finite values at t={t + dt:.6g}", t + dt)
    if isEnabledForTrace():
        trace(f"master step t={t:.6g} dt={dt:.3g} cfl={cfl:.4f}")
    return ValueField(field.grid, values.reshape(field.values.shape)), cfl


class _Recorder:
    def __init__(self, field: ValueField, stride: int, cap: float) -> None:
        self.times = [0.0]
        self.fields = [field]
        self.stride = stride
        self.cap = cap
        self.steps = 0
        self.max_cfl = 0.0

    def check(self, field: ValueField, t: float) -> None:
        if field.sup_norm() > self.cap:
            raise BlowUpException(
                f"solution exceeded the blow-up cap {self.cap:.3e} at t={t:.6g}", t
            )

    def record(self, field: ValueField, t: float, force: bool = False) -> None:
        if force or self.steps % self.stride == 0:
            self.times.append(t)
            self.fields.append(field)


def _output_stride(t_f: float, dt: float) -> int:
    return max(int(math.ceil(t_f / dt / MAX_OUTPUT_SLICES)), 1)


def _blowup_cap(U0: ValueField, blowup_factor: Optional[float]) -> float:
    factor = getdefaultblowupfactor() if blowup_factor is None else blowup_factor
    return factor * (1.0 + U0.sup_norm())


def _march(
    field: ValueField,
    t0: float,
    horizon: float,
    dt: float,
    step: Callable[[ValueField, float, float], Tuple[ValueField, float]],
    recorder: _Recorder,
) -> ValueField:
    if horizon <= 0.0:
        return field
    t = t0
    steps = step_sizes(horizon, dt)
    for k, size in enumerate(steps):
        field, cfl = step(field, t, size)
        recorder.max_cfl = max(recorder.max_cfl, cfl)
        recorder.steps += 1
        last = k + 1 == len(steps)
        t = t0 + horizon if last else t + size
        recorder.check(field, t)
        recorder.record(field, t, force=last)
    return field


def solve_master(
    U0: ValueField,
    coupling: Coupling,
    noise: NoiseSpec,
    t_f: float,
    dt: float,
    discount: float = 0.0,
    blowup_factor: Optional[float] = None,
) -> Trajectory:
    """
    March the master equation from U0 on [0, t_f].

    Deterministic jumps split the step sequence exactly at their time t1,
    where U(t1+) = jump_pullback(U(t1-), J); both sides are recorded. A jump
    at or after t_f never fires.

    Parameters
    ----------
    U0: ValueField
        initial data
    coupling: Coupling
        the pair (F, G)
    noise: NoiseSpec
        noise regime, None for no noise
    t_f: float
        horizon
    dt: float
        time step, the last step of each segment is shortened
    discount: float
        zero-order discount coefficient
    blowup_factor: float
        cap factor f of f (1 + |U0|), process default when omitted

    Returns
    ----------
    trajectory: Trajectory
    """
    if noise is None:
        noise = NoNoise()
    if not t_f > 0:
        raise NoiseException(f"horizon must be positive, got {t_f}")
    if not 0 < dt <= t_f:
        raise CflException(f"time step must lie in (0, t_f], got {dt}", 0.0, dt)
    if discount < 0:
        raise NoiseException(f"discount must be nonnegative, got {discount}")
    recorder = _Recorder(U0, _output_stride(t_f, dt), _blowup_cap(U0, blowup_factor))

    def step(field: ValueField, t: float, size: float) -> Tuple[ValueField, float]:
        return _explicit_master_step(field, coupling, noise, t, size, discount)

    jumps = [jump for jump in noise.deterministic_jumps() if jump.t1 < t_f]
    field_now, t_now = U0, 0.0
    for jump in jumps:
        field_now = _march(field_now, t_now, jump.t1 - t_now, dt, step, recorder)
        field_now = jump_pullback(field_now, jump.jump)
        t_now = jump.t1
        recorder.check(field_now, t_now)
        recorder.record(field_now, t_now, force=True)
        debug(f"deterministic jump applied at t1={t_now:.6g}")
    _march(field_now, t_now, t_f - t_now, dt, step, recorder)

    meta = {
        "dt": dt,
        "h": U0.grid.h,
        "cfl": recorder.max_cfl,
        "steps": recorder.steps,
        "output_stride": recorder.stride,
        "blowup_cap": recorder.cap,
        "discount": discount,
        "noise": noise.describe(),
        "boundary": "clamped",
    }
    debug(f"solve_master: {recorder.steps} steps, max CFL {recorder.max_cfl:.4f}")
    return Trajectory(recorder.times, recorder.fields, meta)


def _directional_second_derivative(values: np.ndarray, direction: np.ndarray, spacing: np.ndarray) -> np.ndarray:
    # sum_ab v_a v_b d_ab U, direction of shape (*grid.shape, d)
    out = np.zeros_like(values)
    d = direction.shape[-1]
    for a in range(d):
        va = direction[..., a][..., None]
        out += va * va * second_differences(values, spacing, a)
        for b in range(a + 1, d):
            vb = direction[..., b][..., None]
            out += 2.0 * va * vb * mixed_differences(values, spacing, a, b)
    return out


def solve_asymptotic(
    U0: ValueField,
    coupling: Coupling,
    S: np.ndarray,
    order: str,
    t_f: float,
    dt: float,
    second_order_form: str = "displayed",
    blowup_factor: Optional[float] = None,
) -> Trajectory:
    """
    Small-jump limits of the Poisson master equation.

    order="first":
        dU/dt + (F.grad)U - (Sx.grad)U - S^T U = G
    order="second", second_order_form="displayed":
        dU/dt + (F.grad)U - S^T (Sx.grad)U - 2 (Sx.D2.Sx) U = G
    order="second", second_order_form="derived":
        dU/dt + (F.grad)U - 2 S^T (Sx.grad)U - (Sx.D2.Sx) U = G

    The second order term uses centered second differences along Sx and is
    subject to the parabolic bound dt <= h^2 / (4 c max|Sx|^2), c the
    diffusion coefficient over 2.
    """
    if order not in ("first", "second"):
        raise NoiseException(f"order must be 'first' or 'second', got {order!r}")
    if second_order_form not in ("displayed", "derived"):
        raise NoiseException(
            f"second_order_form must be 'displayed' or 'derived', got {second_order_form!r}"
        )
    if not t_f > 0:
        raise NoiseException(f"horizon must be positive, got {t_f}")
    if not 0 < dt <= t_f:
        raise CflException(f"time step must lie in (0, t_f], got {dt}", 0.0, dt)
    grid = U0.grid
    S = _square(S, grid.dim, "S")
    x = grid.flat_coordinates
    sx = x @ S.T
    spacing = grid.spacing
    shape = U0.values.shape
    if order == "second":
        transport_coef, diffusion_coef = (1.0, 2.0) if second_order_form == "displayed" else (2.0, 1.0)
        sx_grid = sx.reshape(shape)
        diffusion_rate = 2.0 * diffusion_coef * float(
            np.max(np.sum(sx ** 2 / spacing ** 2, axis=-1))
        )
    else:
        transport_coef, diffusion_coef, diffusion_rate = 1.0, 0.0, 0.0
    s_norm = float(np.linalg.norm(S, 2))

    def step(field: ValueField, t: float, size: float) -> Tuple[ValueField, float]:
        u = field.flat
        if order == "first":
            drift = coupling.drift(x, u) - sx
            transport = upwind_transport(field.values, drift.reshape(shape), spacing).reshape(u.shape)
            rhs = coupling.source(x, u) - transport + u @ S
            zero_rate = s_norm
            transport_rate = np.sum(np.abs(drift) / spacing, axis=-1)
        else:
            drift = coupling.drift(x, u)
            transport = upwind_transport(field.values, drift.reshape(shape), spacing).reshape(u.shape)
            along = upwind_transport(field.values, -transport_coef * sx.reshape(shape), spacing)
            along = along.reshape(u.shape) @ S
            diffusion = diffusion_coef * _directional_second_derivative(
                field.values, sx_grid, spacing
            ).reshape(u.shape)
            rhs = coupling.source(x, u) - transport - along + diffusion
            zero_rate = diffusion_rate
            transport_rate = np.sum(
                (np.abs(drift) + transport_coef * s_norm * np.abs(sx)) / spacing, axis=-1
            )
        cfl = size * (float(np.max(transport_rate)) + zero_rate)
        _check_cfl(cfl, float(np.max(np.abs(drift))), size)
        values = u + size * rhs
        if not np.all(np.isfinite(values)):
            raise BlowUpException(f"non-finite values at t={t + size:.6g}", t + size)
        return ValueField(grid, values.reshape(shape)), cfl

    recorder = _Recorder(U0, _output_stride(t_f, dt), _blowup_cap(U0, blowup_factor))
    _march(U0, 0.0, t_f, dt, step, recorder)
    meta = {
        "dt": dt,
        "h": grid.h,
        "cfl": recorder.max_cfl,
        "steps": recorder.steps,
        "output_stride": recorder.stride,
        "blowup_cap": recorder.cap,
        "order": order,
        "second_order_form": second_order_form if order == "second" else None,
        "boundary": "clamped",
    }
    debug(f"solve_asymptotic({order}): {recorder.steps} steps, max CFL {recorder.max_cfl:.4f}")
    return Trajectory(recorder.times, recorder.fields, meta)
