import itertools
from functools import cached_property
from typing import Callable, Sequence, Tuple, Union

import numpy as np

from ._exceptions import FieldException, GridException

"""
_grid.py
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
    "Grid",
    "ValueField",
    "ScalarField1D",
    "build_grid",
    "interpolate",
    "interpolate_points",
    "interpolate_stack",
    "wasserstein1_periodic",
    "one_sided_differences",
    "upwind_transport",
    "second_differences",
    "mixed_differences",
    "periodic_gradient",
    "periodic_laplacian",
    "periodic_interpolate",
    "periodic_shift",
]

MAX_DIMENSION = 4
# points closer than this (in index units) to a node are evaluated on the node
_SNAP = 1e-9


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class Grid:
    """
    Tensor grid on the box [lower, upper].

    Node `index` sits at lower + index * spacing, with
    spacing = (upper - lower) / (nodes_per_axis - 1).

    Parameters
    ----------
    lower: sequence of float
        lower box corner
    upper: sequence of float
        upper box corner
    nodes_per_axis: sequence of int
        node count per axis, at least 2
    """

    def __init__(
        self,
        lower: Sequence[float],
        upper: Sequence[float],
        nodes_per_axis: Sequence[int],
    ) -> None:
        lower_arr = np.atleast_1d(np.asarray(lower, dtype=float))
        upper_arr = np.atleast_1d(np.asarray(upper, dtype=float))
        nodes = tuple(int(n) for n in np.atleast_1d(nodes_per_axis))
        if not (len(lower_arr) == len(upper_arr) == len(nodes)):
            axis = min(len(lower_arr), len(upper_arr), len(nodes))
            raise GridException(
                f"lower, upper and nodes_per_axis disagree on the dimension (axis {axis})",
                axis,
            )
        if len(nodes) > MAX_DIMENSION:
            raise GridException(
                f"dimension {len(nodes)} exceeds {MAX_DIMENSION}", MAX_DIMENSION
            )
        for axis, n in enumerate(nodes):
            if n < 2:
                raise GridException(f"axis {axis}: needs at least 2 nodes, got {n}", axis)
            if not upper_arr[axis] > lower_arr[axis]:
                raise GridException(
                    f"axis {axis}: upper {upper_arr[axis]} must exceed lower {lower_arr[axis]}",
                    axis,
                )
        self.lower = _readonly(lower_arr)
        self.upper = _readonly(upper_arr)
        self.nodes_per_axis = nodes
        self.spacing = _readonly((upper_arr - lower_arr) / (np.array(nodes) - 1))

    def __repr__(self) -> str:
        return (
            f"Grid(lower={self.lower.tolist()}, upper={self.upper.tolist()}, "
            f"nodes_per_axis={list(self.nodes_per_axis)})"
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.nodes_per_axis == other.nodes_per_axis
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    def __hash__(self) -> int:
        return hash((self.nodes_per_axis, tuple(self.lower), tuple(self.upper)))

    @property
    def dim(self) -> int:
        return len(self.nodes_per_axis)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.nodes_per_axis

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes_per_axis))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def h(self) -> float:
        """
        Largest spacing, the h of the O(h + dt) error statements.
        """
        return float(np.max(self.spacing))

    @cached_property
    def axes(self) -> Tuple[np.ndarray, ...]:
        return tuple(
            _readonly(self.lower[a] + np.arange(n) * self.spacing[a])
            for a, n in enumerate(self.nodes_per_axis)
        )

    @cached_property
    def coordinates(self) -> np.ndarray:
        """
        Node coordinates, shape (*shape, dim).
        """
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return _readonly(np.stack(mesh, axis=-1))

    @cached_property
    def flat_coordinates(self) -> np.ndarray:
        """
        Node coordinates in C order, shape (size, dim).
        """
        return _readonly(self.coordinates.reshape(self.size, self.dim).copy())

    def node_coordinate(self, index: Sequence[int]) -> np.ndarray:
        return self.lower + np.asarray(index, dtype=float) * self.spacing

    def unravel(self, flat_index: int) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(flat_index, self.shape))

    def clamp(self, points: np.ndarray) -> np.ndarray:
        return np.clip(points, self.lower, self.upper)

    def contains(self, point: np.ndarray) -> bool:
        point = np.asarray(point, dtype=float)
        return bool(np.all(point >= self.lower) and np.all(point <= self.upper))


def build_grid(
    lower: Sequence[float], upper: Sequence[float], nodes_per_axis: Sequence[int]
) -> Grid:
    """
    Build a box grid, rejecting degenerate axes with their index.
    """
    return Grid(lower, upper, nodes_per_axis)


class ValueField:
    """
    Values of U: node -> R^d on a Grid, stored with shape (*grid.shape, d).

    Fields are immutable snapshots, safe to share between threads.
    """

    def __init__(self, grid: Grid, values: np.ndarray) -> None:
        values = np.array(values, dtype=float)
        expected = grid.shape + (grid.dim,)
        if values.shape != expected:
            if values.size == int(np.prod(expected)):
                values = values.reshape(expected)
            else:
                raise FieldException(
                    f"values have shape {values.shape}, grid expects {expected}"
                )
        if not np.all(np.isfinite(values)):
            raise FieldException("field values must be finite")
        self.grid = grid
        self.values = _readonly(values)

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[[np.ndarray], np.ndarray]) -> "ValueField":
        """
        Sample a vectorised map (N, d) -> (N, d) on the grid nodes.
        """
        flat = np.asarray(func(grid.flat_coordinates), dtype=float)
        return cls(grid, flat.reshape(grid.shape + (grid.dim,)))

    @classmethod
    def affine(cls, grid: Grid, matrix: np.ndarray, offset: np.ndarray = None) -> "ValueField":
        """
        Sample U(x) = M x + b.
        """
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        offset = np.zeros(grid.dim) if offset is None else np.asarray(offset, dtype=float)
        return cls.from_function(grid, lambda x: x @ matrix.T + offset)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(self.grid.size, self.grid.dim)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def with_values(self, values: np.ndarray) -> "ValueField":
        return ValueField(self.grid, values)


def _locate(grid: Grid, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    clamped = grid.clamp(points)
    s = (clamped - grid.lower) / grid.spacing
    nearest = np.rint(s)
    s = np.where(np.abs(s - nearest) < _SNAP, nearest, s)
    base = np.clip(np.floor(s).astype(int), 0, np.array(grid.shape) - 2)
    return base, s - base


def interpolate_points(field: ValueField, points: np.ndarray) -> np.ndarray:
    """
    Multilinear interpolation of every component at many points.

    Points outside the box are clamped onto it first, so the operation is
    total. Exact on nodes and for globally affine fields.

    Parameters
    ----------
    field: ValueField
        field to evaluate
    points: array of shape (M, d)
        evaluation points

    Returns
    ----------
    values: array of shape (M, d)
    """
    return _multilinear(field.grid, field.values, (), points)


def interpolate_stack(
    grid: Grid, stack: np.ndarray, slice_index: np.ndarray, points: np.ndarray
) -> np.ndarray:
    """
    Like interpolate_points on a stack of fields of shape (K, *grid.shape, d),
    point i being read from slice slice_index[i].
    """
    return _multilinear(grid, stack, (np.asarray(slice_index, dtype=int),), points)


def _multilinear(grid: Grid, values: np.ndarray, lead: tuple, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float).reshape(-1, grid.dim)
    base, frac = _locate(grid, points)
    out = np.zeros((points.shape[0], values.shape[-1]))
    for corner in itertools.product((0, 1), repeat=grid.dim):
        weight = np.ones(points.shape[0])
        index = list(lead)
        for a, bit in enumerate(corner):
            weight = weight * (frac[:, a] if bit else 1.0 - frac[:, a])
            index.append(base[:, a] + bit)
        out += weight[:, None] * values[tuple(index)]
    return out


def interpolate(field: ValueField, point: Sequence[float]) -> np.ndarray:
    """
    Multilinear interpolation of a field at one point, clamped to the box.
    """
    return interpolate_points(field, np.asarray(point, dtype=float).reshape(1, -1))[0]


def one_sided_differences(
    values: np.ndarray, spacing: np.ndarray, axis: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Backward and forward differences along `axis` of an array shaped
    (*grid.shape, d).

    Ghost nodes outside the box carry the boundary value (the clamping
    convention), so the backward difference vanishes on the first node and
    the forward difference on the last one.
    """
    diff = np.diff(values, axis=axis) / spacing[axis]
    pad_shape = list(values.shape)
    pad_shape[axis] = 1
    zero = np.zeros(pad_shape)
    backward = np.concatenate([zero, diff], axis=axis)
    forward = np.concatenate([diff, zero], axis=axis)
    return backward, forward


def upwind_transport(values: np.ndarray, drift: np.ndarray, spacing: np.ndarray) -> np.ndarray:
    """
    First order upwind approximation of (b . grad) U.

    values and drift both have shape (*grid.shape, d); drift[..., i] is the
    i-th velocity component at each node.
    """
    out = np.zeros_like(values)
    for axis in range(drift.shape[-1]):
        backward, forward = one_sided_differences(values, spacing, axis)
        b = drift[..., axis][..., None]
        out += np.maximum(b, 0.0) * backward + np.minimum(b, 0.0) * forward
    return out


def second_differences(values: np.ndarray, spacing: np.ndarray, axis: int) -> np.ndarray:
    """
    Centered second difference along `axis`, with edge ghosts.
    """
    width = [(0, 0)] * values.ndim
    width[axis] = (1, 1)
    padded = np.pad(values, width, mode="edge")
    n = values.shape[axis]
    upper = np.take(padded, np.arange(2, n + 2), axis=axis)
    centre = np.take(padded, np.arange(1, n + 1), axis=axis)
    lower = np.take(padded, np.arange(0, n), axis=axis)
    return (upper - 2.0 * centre + lower) / spacing[axis] ** 2


def mixed_differences(values: np.ndarray, spacing: np.ndarray, a: int, b: int) -> np.ndarray:
    """
    Centered cross difference d^2/dx_a dx_b, with edge ghosts.
    """
    width = [(0, 0)] * values.ndim
    width[a] = (1, 1)
    width[b] = (1, 1)
    padded = np.pad(values, width, mode="edge")
    na, nb = values.shape[a], values.shape[b]

    def corner(da: int, db: int) -> np.ndarray:
        part = np.take(padded, np.arange(1 + da, na + 1 + da), axis=a)
        return np.take(part, np.arange(1 + db, nb + 1 + db), axis=b)

    return (corner(1, 1) - corner(1, -1) - corner(-1, 1) + corner(-1, -1)) / (
        4.0 * spacing[a] * spacing[b]
    )


class ScalarField1D:
    """
    n values on the periodic unit circle [0, 1), node i at x = i / n.

    Parameters
    ----------
    values: sequence of float
        nodal values; node n wraps to node 0
    """

    def __init__(self, values: Union[Sequence[float], np.ndarray]) -> None:
        values = np.array(values, dtype=float).reshape(-1)
        if values.size < 2:
            raise FieldException("a periodic field needs at least 2 nodes")
        if not np.all(np.isfinite(values)):
            raise FieldException("field values must be finite")
        self.values = _readonly(values)

    @classmethod
    def from_function(cls, n: int, func: Callable[[np.ndarray], np.ndarray]) -> "ScalarField1D":
        return cls(func(np.arange(n) / n))

    @classmethod
    def density(cls, n: int, func: Callable[[np.ndarray], np.ndarray]) -> "ScalarField1D":
        """
        Sample a nonnegative profile and normalise it to unit mass.
        """
        raw = np.asarray(func(np.arange(n) / n), dtype=float)
        if np.any(raw < 0):
            raise FieldException("a density profile must be nonnegative")
        if not np.sum(raw) > 0:
            raise FieldException("a density profile must have positive mass")
        return cls(raw / (np.sum(raw) / n))

    @classmethod
    def uniform(cls, n: int) -> "ScalarField1D":
        return cls(np.ones(n))

    @classmethod
    def point_mass(cls, n: int, x: float) -> "ScalarField1D":
        values = np.zeros(n)
        values[int(round(x * n)) % n] = float(n)
        return cls(values)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def coordinates(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def mass(self) -> float:
        return float(np.sum(self.values) * self.h)

    def is_density(self, tol: float = 1e-10) -> bool:
        return bool(np.all(self.values >= 0.0) and abs(self.mass() - 1.0) <= tol)

    def shifted(self, cells: int) -> "ScalarField1D":
        """
        Circular shift by a whole number of cells (towards larger x).
        """
        return ScalarField1D(np.roll(self.values, cells))


def wasserstein1_periodic(m1: ScalarField1D, m2: ScalarField1D) -> float:
    """
    Monge-Kantorovich distance between two densities on the circle.

    W1 = min_k h * sum |F1 - F2 - k| where F are the cumulative sums; the
    minimising constant is the median of F1 - F2.
    """
    if m1.n != m2.n:
        raise FieldException(f"densities live on different grids ({m1.n} vs {m2.n} nodes)")
    h = m1.h
    gap = np.cumsum(m1.values) * h - np.cumsum(m2.values) * h
    shift = np.median(gap)
    return float(h * np.sum(np.abs(gap - shift)))


def periodic_gradient(values: np.ndarray, h: float) -> np.ndarray:
    """
    Centered first difference on the circle.
    """
    return (np.roll(values, -1) - np.roll(values, 1)) / (2.0 * h)


def periodic_laplacian(values: np.ndarray, h: float) -> np.ndarray:
    return (np.roll(values, -1) - 2.0 * values + np.roll(values, 1)) / (h * h)


def periodic_interpolate(values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """
    Linear interpolation of nodal values on the unit circle, points taken
    modulo 1.
    """
    n = values.size
    s = np.mod(np.asarray(points, dtype=float), 1.0) * n
    nearest = np.rint(s)
    s = np.where(np.abs(s - nearest) < _SNAP, nearest, s)
    base = np.floor(s).astype(int)
    frac = s - base
    base = np.mod(base, n)
    return (1.0 - frac) * values[base] + frac * values[np.mod(base + 1, n)]


def periodic_shift(values: np.ndarray, shift: float) -> np.ndarray:
    """
    x -> values(x + shift) on the circle, by trigonometric interpolation.

    The shift is a phase factor on the discrete Fourier coefficients, so
    whole-cell shifts reproduce np.roll and band-limited data is moved
    without damping.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / n)
    return np.real(np.fft.ifft(np.fft.fft(values) * np.exp(1j * k * shift)))
