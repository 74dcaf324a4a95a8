import csv
import json
import math
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ._characteristics import CONVENTIONS, compare_characteristics_to_grid, estimate_value_mc, simulate_abm
from ._defaults import DEFAULT_PAIR_SAMPLES, DEFAULT_PICARD, DEFAULT_SCAN, MAX_OUTPUT_SLICES
from ._exceptions import (
    ConfigException,
    CouplingException,
    FieldException,
    GridException,
    MfgLabException,
    NoiseException,
)
from ._grid import Grid, ScalarField1D, ValueField
from ._logging import debug, dump, error, info, isEnabledForTrace, warning
from ._master import (
    AffineJump,
    CommonPoisson,
    Coupling,
    DeterministicJump,
    IidPoisson,
    Mixture,
    NoNoise,
    NoiseSpec,
    Trajectory,
    solve_asymptotic,
    solve_master,
    symmetric_jump_pair,
)
from ._mfg import (
    HamiltonianSpec,
    Quadratic,
    Separable,
    StrongCouplingResult,
    conserved_momentum,
    effective_diffusion,
    lambda_sweep,
    scan_mean_control,
    semiconcavity_check,
    solve_fp,
    solve_fp_higher_order,
    solve_fp_relative_cost,
    solve_mfg_discounted,
    solve_strong_coupling,
    uniqueness_threshold,
)
from ._monotonicity import (
    F_MONOTONE,
    G_MONOTONE,
    RandomPairs,
    check_lipschitz_bound,
    lipschitz_budget,
    measured_lipschitz,
    verify_propagation,
)
from ._utils import format_float

"""
_scenarios.py
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
    "ScenarioConfig",
    "Scenario",
    "SCENARIO_NAMES",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_SOLVER",
    "get_scenario",
    "list_scenarios",
    "resolve_params",
    "run_scenario",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

SCHEMA_VERSION = 1
DEFAULT_OUT_DIR = "mfg-lab-out"
_U64 = 2 ** 64

SCENARIO_NAMES = (
    "master-noiseless",
    "master-jump-deterministic",
    "master-poisson-common",
    "master-poisson-iid",
    "master-mixture",
    "asymptotic-limit",
    "characteristics-compare",
    "mc-value",
    "abm-path",
    "monotonicity-report",
    "lipschitz-report",
    "conserved-momentum",
    "strong-coupling-roots",
    "uniqueness-threshold",
    "mfg-lambda-sweep",
    "relative-cost",
    "higher-order-fp",
)

_POSITIVE = {
    "dt", "t_f", "t", "horizon", "n", "n_paths", "nodes", "c", "width", "delta",
    "lambdas", "eps_list", "refine_factor", "pair_samples",
}
_NONNEGATIVE = {"nu", "rate", "rates", "discount", "lambda_disc", "lambda_ctrl", "psi_slope", "alpha", "slack"}
_INTEGER = {"dim", "n", "nodes", "n_paths", "pair_samples", "refine_factor", "n_points"}
# scalar defaults that also accept a matrix or a vector
_ARRAY_OK = {"A", "B", "C", "D", "S", "lower", "upper", "nodes", "sample_lower", "sample_upper"}


@dataclass
class ScenarioConfig:
    """
    One scenario run, as read from a JSON config file.

    Parameters
    ----------
    scenario: str
        catalog name
    seed: int
        64-bit seed shared by every random stream of the run
    params: dict
        scenario parameters, missing ones take the scenario defaults
    out_dir: str
        output directory
    """

    scenario: str
    seed: int = 0
    params: Dict[str, Any] = field(default_factory=dict)
    out_dir: str = DEFAULT_OUT_DIR

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigException("a scenario config must be a JSON object")
        unknown = set(data) - {"scenario", "seed", "params", "out_dir"}
        if unknown:
            raise ConfigException(f"unknown config keys {sorted(unknown)}")
        if "scenario" not in data:
            raise ConfigException("config has no scenario name", list(SCENARIO_NAMES))
        scenario = data["scenario"]
        if not isinstance(scenario, str):
            raise ConfigException("scenario must be a string", list(SCENARIO_NAMES))
        seed = data.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < _U64:
            raise ConfigException(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        params = data.get("params", {})
        if not isinstance(params, dict):
            raise ConfigException("params must be a JSON object")
        out_dir = data.get("out_dir", DEFAULT_OUT_DIR)
        if not isinstance(out_dir, str) or not out_dir:
            raise ConfigException("out_dir must be a non-empty string")
        return cls(scenario, seed, dict(params), out_dir)

    @classmethod
    def from_file(cls, path: str) -> "ScenarioConfig":
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except OSError as e:
            raise ConfigException(f"cannot read config {path}: {e}") from e
        except ValueError as e:
            raise ConfigException(f"config {path} is not valid JSON: {e}") from e
        return cls.from_dict(data)


@dataclass
class _Table:
    name: str
    header: List[str]
    rows: List[List[Any]]


@dataclass
class _TrajectoryBlock:
    """
    Slices of one or more fields sharing node coordinates.

    components maps a component name to an array of shape (slices, nodes).
    """

    times: Sequence[float]
    coords: np.ndarray
    components: Dict[str, np.ndarray]


@dataclass
class ScenarioOutput:
    results: Dict[str, Any] = field(default_factory=dict)
    verdicts: Dict[str, bool] = field(default_factory=dict)
    scheme: Dict[str, Any] = field(default_factory=dict)
    blocks: List[_TrajectoryBlock] = field(default_factory=list)
    tables: List[_Table] = field(default_factory=list)


Runner = Callable[[Dict[str, Any], int, Optional[int]], ScenarioOutput]


@dataclass
class Scenario:
    name: str
    description: str
    defaults: Dict[str, Any]
    runner: Runner


_REGISTRY: Dict[str, Scenario] = {}


def _register(name: str, description: str, defaults: Dict[str, Any]) -> Callable[[Runner], Runner]:
    def wrap(runner: Runner) -> Runner:
        _REGISTRY[name] = Scenario(name, description, defaults, runner)
        return runner

    return wrap


def get_scenario(name: str) -> Scenario:
    if name not in _REGISTRY:
        raise ConfigException(
            f"unknown scenario {name!r}, valid names: {', '.join(SCENARIO_NAMES)}", list(SCENARIO_NAMES)
        )
    return _REGISTRY[name]


def list_scenarios() -> List[Tuple[str, str]]:
    """
    The scenario catalog as (name, one-line description) pairs.
    """
    return [(name, _REGISTRY[name].description) for name in SCENARIO_NAMES]


def _numbers(value: Any) -> List[Any]:
    if isinstance(value, list):
        out: List[Any] = []
        for item in value:
            out.extend(_numbers(item))
        return out
    return [value]


def _check_param(name: str, value: Any, default: Any) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigException(f"parameter {name} must be a boolean, got {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigException(f"parameter {name} must be a string, got {value!r}")
        return value
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigException(f"parameter {name} must be an object, got {value!r}")
        return value
    if isinstance(default, list) or (name in _ARRAY_OK and isinstance(value, list)):
        if not isinstance(value, list) or not value:
            raise ConfigException(f"parameter {name} must be a non-empty list, got {value!r}")
        if isinstance(default, list) and default and isinstance(default[0], dict):
            if not all(isinstance(item, dict) for item in value):
                raise ConfigException(f"parameter {name} must be a list of objects")
            return value
    elif isinstance(value, list):
        raise ConfigException(f"parameter {name} must be a single number, got {value!r}")

    numbers = _numbers(value)
    for number in numbers:
        if isinstance(number, bool) or not isinstance(number, (int, float)):
            raise ConfigException(f"parameter {name} must be numeric, got {value!r}")
        if not math.isfinite(number):
            raise ConfigException(f"parameter {name} must be finite, got {value!r}")
        if name in _POSITIVE and not number > 0:
            raise ConfigException(f"parameter {name} must be positive, got {value!r}")
        if name in _NONNEGATIVE and not number >= 0:
            raise ConfigException(f"parameter {name} must be nonnegative, got {value!r}")
        if name in _INTEGER and not float(number).is_integer():
            raise ConfigException(f"parameter {name} must be an integer, got {value!r}")
    if name in _INTEGER:
        return [int(v) for v in value] if isinstance(value, list) else int(value)
    return value


def resolve_params(scenario: Scenario, params: Dict[str, Any]) -> Tuple[Dict[str, Any], List[str]]:
    """
    Merge params over the scenario defaults.

    Returns
    ----------
    (resolved, defaulted): the full parameter set and the names that took
    their default value
    """
    unknown = set(params) - set(scenario.defaults)
    if unknown:
        raise ConfigException(
            f"scenario {scenario.name} has no parameter(s) {sorted(unknown)}", sorted(scenario.defaults)
        )
    resolved: Dict[str, Any] = {}
    defaulted: List[str] = []
    for name, default in scenario.defaults.items():
        if name in params:
            resolved[name] = _check_param(name, params[name], default)
        else:
            resolved[name] = json.loads(json.dumps(default))
            defaulted.append(name)
    return resolved, defaulted


@contextmanager
def _model_errors() -> Iterator[None]:
    # a model that cannot be built from the config is a validation failure
    try:
        yield
    except (GridException, CouplingException, NoiseException, FieldException) as e:
        raise ConfigException(f"{type(e).__name__}: {e}") from e


def _choice(p: Dict[str, Any], name: str, choices: Sequence[str]) -> str:
    value = p[name]
    if value not in choices:
        raise ConfigException(f"parameter {name} must be one of {list(choices)}, got {value!r}", list(choices))
    return value


def _spec_keys(spec: Dict[str, Any], what: str, allowed: Sequence[str]) -> None:
    unknown = set(spec) - set(allowed)
    if unknown:
        raise ConfigException(f"{what} has unknown keys {sorted(unknown)}", sorted(allowed))


def _matrix(value: Any, dim: int, name: str) -> np.ndarray:
    array = np.asarray(value, dtype=float)
    if array.ndim == 0:
        return float(array) * np.eye(dim)
    if array.shape != (dim, dim):
        raise ConfigException(f"{name} must be a scalar or a {dim}x{dim} matrix, got shape {array.shape}")
    return array


def _vector(value: Any, dim: int, name: str) -> np.ndarray:
    array = np.asarray(value, dtype=float)
    if array.ndim == 0:
        return np.full(dim, float(array))
    if array.shape != (dim,):
        raise ConfigException(f"{name} must be a scalar or a vector of length {dim}, got shape {array.shape}")
    return array


def _box_grid(p: Dict[str, Any]) -> Grid:
    dim = p["dim"]
    nodes = np.asarray(p["nodes"], dtype=int)
    nodes = np.full(dim, int(nodes)) if nodes.ndim == 0 else nodes
    with _model_errors():
        return Grid(_vector(p["lower"], dim, "lower"), _vector(p["upper"], dim, "upper"), nodes)


def _coupling(p: Dict[str, Any]) -> Coupling:
    dim = p["dim"]
    with _model_errors():
        return Coupling.linear(
            _matrix(p["A"], dim, "A"),
            _matrix(p["B"], dim, "B"),
            _matrix(p["C"], dim, "C"),
            _matrix(p["D"], dim, "D"),
            require_monotone=p["require_monotone"],
        )


def _jump(spec: Dict[str, Any], dim: int) -> AffineJump:
    kind = spec.get("kind", "affine")
    with _model_errors():
        if kind == "affine":
            _spec_keys(spec, "jump", ("kind", "S", "e", "theta", "weight"))
            jump = AffineJump(_matrix(spec.get("S", 1.0), dim, "S"), _vector(spec.get("e", 0.0), dim, "e"))
        elif kind == "swap":
            _spec_keys(spec, "jump", ("kind", "i", "j", "theta", "weight"))
            i, j = int(spec.get("i", 0)), int(spec.get("j", 1))
            if not (0 <= i < dim and 0 <= j < dim):
                raise ConfigException(f"swap states ({i}, {j}) out of range for dimension {dim}")
            jump = AffineJump.swap(dim, i, j)
        elif kind == "split_half":
            _spec_keys(spec, "jump", ("kind", "delta", "theta", "weight"))
            jump = AffineJump.split_half(dim, float(spec.get("delta", 0.0)))
        else:
            raise ConfigException(f"unknown jump kind {kind!r}", ["affine", "swap", "split_half"])
        if "theta" in spec:
            jump = jump.partial(float(spec["theta"]))
    return jump


def _initial_field(spec: Dict[str, Any], grid: Grid) -> ValueField:
    kind = spec.get("kind", "affine")
    dim = grid.dim
    with _model_errors():
        if kind == "affine":
            _spec_keys(spec, "U0", ("kind", "M", "b"))
            return ValueField.affine(grid, _matrix(spec.get("M", 1.0), dim, "M"), _vector(spec.get("b", 0.0), dim, "b"))
        if kind == "gaussian":
            _spec_keys(spec, "U0", ("kind", "center", "width", "amplitude"))
            center = _vector(spec.get("center", 0.0), dim, "center")
            width = float(spec.get("width", 1.0))
            if not width > 0:
                raise ConfigException(f"gaussian width must be positive, got {width}")
            amplitude = float(spec.get("amplitude", 1.0))

            def bump(x: np.ndarray) -> np.ndarray:
                r2 = np.sum((x - center) ** 2, axis=1, keepdims=True)
                return amplitude * np.exp(-r2 / (2.0 * width * width)) * np.ones(dim)

            return ValueField.from_function(grid, bump)
        if kind == "zero":
            _spec_keys(spec, "U0", ("kind",))
            return ValueField(grid, np.zeros(grid.shape + (dim,)))
    raise ConfigException(f"unknown U0 kind {kind!r}", ["affine", "gaussian", "zero"])


def _circle_distance(x: np.ndarray, center: float) -> np.ndarray:
    d = np.abs(x - center) % 1.0
    return np.minimum(d, 1.0 - d)


def _profile(spec: Dict[str, Any], what: str) -> Callable[[np.ndarray], np.ndarray]:
    kind = spec.get("kind")
    if kind in ("sine", "cosine"):
        _spec_keys(spec, what, ("kind", "amplitude"))
        amplitude = float(spec.get("amplitude", 1.0))
        wave = np.sin if kind == "sine" else np.cos
        return lambda x: amplitude * wave(2.0 * np.pi * x)
    if kind == "bump":
        _spec_keys(spec, what, ("kind", "center", "width"))
        center, width = float(spec.get("center", 0.5)), float(spec.get("width", 0.1))
        if not width > 0:
            raise ConfigException(f"{what} bump width must be positive, got {width}")
        return lambda x: np.exp(-_circle_distance(x, center) ** 2 / (2.0 * width * width))
    if kind in ("uniform", "zero"):
        _spec_keys(spec, what, ("kind",))
        value = 1.0 if kind == "uniform" else 0.0
        return lambda x: np.full_like(x, value)
    raise ConfigException(f"unknown {what} kind {kind!r}", ["sine", "cosine", "bump", "uniform", "zero"])


def _torus_field(spec: Dict[str, Any], n: int, what: str) -> ScalarField1D:
    return ScalarField1D.from_function(n, _profile(spec, what))


def _torus_density(spec: Dict[str, Any], n: int) -> ScalarField1D:
    with _model_errors():
        return ScalarField1D.density(n, _profile(spec, "m0"))


def _separable(slope: float) -> Separable:
    return Separable.quadratic(lambda m: slope * m, lambda m: np.full_like(m, slope), name=f"half_p2_minus_{slope:g}m")


def _hamiltonian(p: Dict[str, Any]) -> HamiltonianSpec:
    kind = _choice(p, "hamiltonian", ("separable", "quadratic"))
    if kind == "separable":
        return _separable(p["f_slope"])
    amplitude = p["drift_amplitude"]
    with _model_errors():
        return Quadratic(lambda t, x, m: amplitude * np.sin(2.0 * np.pi * x), p["delta"], name="sine_drift")


def _picard(p: Dict[str, Any]) -> Dict[str, Any]:
    _spec_keys(p["picard"], "picard", DEFAULT_PICARD)
    return dict(p["picard"])


def _slices(count: int) -> np.ndarray:
    if count <= MAX_OUTPUT_SLICES:
        return np.arange(count)
    stride = int(math.ceil((count - 1) / (MAX_OUTPUT_SLICES - 1)))
    idx = list(range(0, count, stride))
    if idx[-1] != count - 1:
        idx.append(count - 1)
    return np.asarray(idx)


def _subsample_rows(rows: List[List[Any]]) -> List[List[Any]]:
    return [rows[i] for i in _slices(len(rows))]


def _master_block(traj: Trajectory, prefix: str = "") -> _TrajectoryBlock:
    grid = traj.grid
    stack = np.stack([f.flat for f in traj.fields])
    components = {f"{prefix}U{i}": stack[:, :, i] for i in range(grid.dim)}
    return _TrajectoryBlock(list(traj.times), grid.flat_coordinates, components)


def _torus_block(times: np.ndarray, fields: Dict[str, np.ndarray]) -> _TrajectoryBlock:
    idx = _slices(len(times))
    n = next(iter(fields.values())).shape[1]
    coords = (np.arange(n) / n).reshape(-1, 1)
    return _TrajectoryBlock(np.asarray(times)[idx], coords, {name: values[idx] for name, values in fields.items()})


def _ratios(values: Sequence[float]) -> List[float]:
    return [values[i] / values[i + 1] if values[i + 1] != 0 else math.inf for i in range(len(values) - 1)]


def _strictly_decreasing(values: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


# master equation scenarios

_MASTER_DEFAULTS: Dict[str, Any] = {
    "dim": 2,
    "lower": 0.0,
    "upper": 4.0,
    "nodes": 21,
    "A": 0.5,
    "B": 0.0,
    "C": 0.0,
    "D": 0.2,
    "require_monotone": True,
    "U0": {"kind": "affine", "M": 0.5},
    "t_f": 1.0,
    "dt": 0.025,
    "discount": 0.0,
    "pair_strategy": "auto",
    "pair_samples": DEFAULT_PAIR_SAMPLES,
}

_VARIANT_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "none": {},
    "deterministic": {"jump": {"S": 0.8, "e": 0.0}, "t1": 0.5},
    "common": {"jump": {"S": 0.8, "e": 0.0}, "rate": 2.0},
    "iid": {"jump": {"S": 0.8, "e": 0.0}, "rate": 2.0},
    "mixture": {"rate": 2.0, "atoms": [{"S": 0.8, "weight": 0.5}, {"kind": "swap", "weight": 0.5}]},
}

_VARIANT_SCENARIOS = {
    "master-noiseless": ("none", "master equation without noise, monotonicity check"),
    "master-jump-deterministic": ("deterministic", "master equation with one deterministic common jump"),
    "master-poisson-common": ("common", "master equation with common Poisson jumps"),
    "master-poisson-iid": ("iid", "master equation with idiosyncratic Poisson jumps"),
    "master-mixture": ("mixture", "master equation with a mixture of affine common jumps"),
}


def _noise(kind: str, p: Dict[str, Any]) -> NoiseSpec:
    dim = p["dim"]
    with _model_errors():
        if kind == "none":
            return NoNoise()
        if kind == "deterministic":
            return DeterministicJump(p["t1"], _jump(p["jump"], dim))
        if kind == "common":
            return CommonPoisson(p["rate"], _jump(p["jump"], dim))
        if kind == "iid":
            return IidPoisson(p["rate"], _jump(p["jump"], dim))
        atoms = []
        for atom in p["atoms"]:
            if "weight" not in atom:
                raise ConfigException("every mixture atom needs a weight")
            atoms.append((_jump(atom, dim), float(atom["weight"])))
        return Mixture(p["rate"], atoms)


def _pair_strategy(p: Dict[str, Any], seed: int):
    strategy = _choice(p, "pair_strategy", ("auto", "all_nodes", "random"))
    if strategy == "random":
        return RandomPairs(p["pair_samples"], seed)
    return strategy


def _run_master_variant(kind: str, p: Dict[str, Any], seed: int, prefix: str = ""):
    grid = _box_grid(p)
    coupling = _coupling(p)
    U0 = _initial_field(p["U0"], grid)
    noise = _noise(kind, p)
    traj = solve_master(U0, coupling, noise, p["t_f"], p["dt"], p["discount"])
    report = verify_propagation(traj, _pair_strategy(p, seed))
    return traj, report, coupling, noise


def _monotonicity_rows(report, variant: str) -> List[List[Any]]:
    rows = []
    for k, t in enumerate(report.times):
        x, y = report.argmin_pair[k]
        rows.append([
            variant,
            t,
            report.min_pairing[k],
            report.tol,
            bool(report.min_pairing[k] >= -report.tol),
            ":".join(str(i) for i in x),
            ":".join(str(i) for i in y),
        ])
    return rows


_MONOTONICITY_HEADER = ["variant", "time", "min_pairing", "tol", "holds", "argmin_x", "argmin_y"]


def _make_master_runner(kind: str) -> Runner:
    def run(p: Dict[str, Any], seed: int, threads: Optional[int]) -> ScenarioOutput:
        traj, report, coupling, noise = _run_master_variant(kind, p, seed)
        verdicts = {"monotone": report.holds}
        results: Dict[str, Any] = {
            "worst_pairing": report.worst,
            "tol": report.tol,
            "pair_count": report.pair_count,
            "pair_strategy": report.strategy,
            "first_failure": None if report.first_failure is None else report.times[report.first_failure],
            "certified": coupling.is_certified,
            "final_sup_norm": traj.final.sup_norm(),
        }
        drift = max(float(np.max(np.abs(f.values - traj.fields[0].values))) for f in traj.fields)
        results["max_change_from_initial"] = drift
        if kind == "none" and all(float(np.max(np.abs(np.asarray(p[k])))) == 0.0 for k in "ABCD") and p["discount"] == 0:
            verdicts["stationary"] = drift == 0.0
        return ScenarioOutput(
            results=results,
            verdicts=verdicts,
            scheme=traj.scheme_meta,
            blocks=[_master_block(traj)],
            tables=[_Table("monotonicity_report.csv", _MONOTONICITY_HEADER, _monotonicity_rows(report, kind))],
        )

    return run


for _name, (_kind, _description) in _VARIANT_SCENARIOS.items():
    _register(_name, _description, dict(_MASTER_DEFAULTS, **_VARIANT_DEFAULTS[_kind]))(_make_master_runner(_kind))


@_register(
    "asymptotic-limit",
    "small-jump limit operator, optionally checked against shrinking Poisson jumps",
    {
        "dim": 1,
        "lower": 0.0,
        "upper": 2.0,
        "nodes": 41,
        "A": 0.0,
        "B": 0.0,
        "C": 0.0,
        "D": 0.0,
        "require_monotone": True,
        "U0": {"kind": "affine", "M": 1.0},
        "S": -0.5,
        "t_f": 1.0,
        "dt": 0.01,
        "order": "first",
        "second_order_form": "displayed",
        "run_sweep": True,
        "eps_list": [0.2, 0.1, 0.05],
    },
)
def _run_asymptotic(p: Dict[str, Any], seed: int, threads: Optional[int]) -> ScenarioOutput:
    order = _choice(p, "order", ("first", "second"))
    form = _choice(p, "second_order_form", ("displayed", "derived"))
    grid = _box_grid(p)
    coupling = _coupling(p)
    U0 = _initial_field(p["U0"], grid)
    S = _matrix(p["S"], p["dim"], "S")
    limit = solve_asymptotic(U0, coupling, S, order, p["t_f"], p["dt"], second_order_form=form)
    output = ScenarioOutput(
        results={"final_sup_norm": limit.final.sup_norm()},
        scheme=limit.scheme_meta,
        blocks=[_master_block(limit)],
    )
    if not p["run_sweep"]:
        return output

    eye = np.eye(p["dim"])
    gaps = []
    for eps in p["eps_list"]:
        with _model_errors():
            if order == "first":
                noise: NoiseSpec = CommonPoisson(1.0 / eps, AffineJump(eye + eps * S))
            else:
                noise = symmetric_jump_pair(S, eps)
        traj = solve_master(U0, coupling, noise, p["t_f"], p["dt"])
        gaps.append(float(np.max(np.abs(traj.final.values - limit.final.values))))
        debug(f"asymptotic-limit: eps={eps:g} terminal gap {gaps[-1]:.6e}")
    ratios = _ratios(gaps)
    output.results.update({"eps": list(p["eps_list"]), "terminal_gaps": gaps, "ratios": ratios})
    output.verdicts["gaps_decrease"] = _strictly_decreasing(gaps)
    output.verdicts["ratios_in_range"] = all(1.4 <= r <= 3.0 for r in ratios)
    rows = [[eps, gap, ratios[i - 1] if i > 0 else None] for i, (eps, gap) in enumerate(zip(p["eps_list"], gaps))]
    output.tables.append(_Table("asymptotic_sweep.csv", ["eps", "terminal_gap", "ratio_to_previous"], rows))
    return output


@_register(
    "characteristics-compare",
    "grid solution against its characteristic ODE system, with a refinement study",
    {
        "dim": 1,
        "lower": 0.0,
        "upper": 4.0,
        "nodes": 101,
        "A": 0.0,
        "B": 0.0,
        "C": 0.5,
        "D": 0.0,
        "require_monotone": False,
        "U0": {"kind": "gaussian", "center": 1.5, "width": 0.3, "amplitude": 1.0},
        "t_f": 1.0,
        "dt": 0.01,
        "sample_lower": 0.5,
        "sample_upper": 2.0,
        "n_points": 10,
        "refine": True,
    },
)
def _run_characteristics(p: Dict[str, Any], seed: int, threads: Optional[int]) -> ScenarioOutput:
    dim = p["dim"]
    coupling = _coupling(p)
    lows = _vector(p["sample_lower"], dim, "sample_lower")
    highs = _vector(p["sample_upper"], dim, "sample_upper")
    points = np.linspace(lows, highs, p["n_points"])

    def gap_for(params: Dict[str, Any]):
        grid = _box_grid(params)
        traj = solve_master(_initial_field(params["U0"], grid), coupling, NoNoise(), params["t_f"], params["dt"])
        return traj, compare_characteristics_to_grid(traj, coupling, points, params["dt"])

    traj, report = gap_for(p)
    h = float(np.max(traj.grid.spacing))
    allowed = 10.0 * (h + p["dt"])
    results: Dict[str, Any] = {"max_gap": report.max_gap, "allowed_gap": allowed, "paths_left_box": int(np.sum(report.left_box))}
    verdicts = {"gap_within_bound": report.max_gap <= allowed}
    fine_gaps = [math.nan] * len(points)
    if p["refine"]:
        nodes = np.asarray(p["nodes"], dtype=int)
        finer = dict(p, nodes=(2 * (nodes - 1) + 1).tolist(), dt=p["dt"] / 2.0)
        _, fine_report = gap_for(finer)
        fine_gaps = list(fine_report.max_gap_per_point)
        ratio = report.max_gap / fine_report.max_gap if fine_report.max_gap > 0 else math.inf
        results.update({"refined_max_gap": fine_report.max_gap, "refinement_ratio": ratio})
        verdicts["refinement_ratio_in_range"] = 1.5 <= ratio <= 3.0
    rows = [
        [i, ":".join(format_float(v) for v in point), report.max_gap_per_point[i], fine_gaps[i], bool(report.left_box[i])]
        for i, point in enumerate(points)
    ]
    return ScenarioOutput(
        results=results,
        verdicts=verdicts,
        scheme=traj.scheme_meta,
        blocks=[_master_block(traj)],
        tables=[_Table("characteristics.csv", ["point", "x0", "max_gap", "max_gap_refined", "left_box"], rows)],
    )


@_register(
    "mc-value",
    "Monte Carlo mean of the jump characteristics against the grid value",
    {
        "dim": 1,
        "lower": 0.0,
        "upper": 2.0,
        "nodes": 81,
        "A": 0.5,
        "B": 0.0,
        "C": 0.0,
        "D": 0.0,
        "require_monotone": True,
        "U0": {"kind": "affine", "M": 1.0},
        "jump": {"S": 0.8, "e": 0.2},
        "rate": 1.0,
        "discount": 0.3,
        "t": 1.0,
        "dt": 0.005,
        "x0": [1.0],
        "n_paths": 10000,
        "convention": "pde",
    },
)
def _run_mc_value(p: Dict[str, Any], seed: int, threads: Optional[int]) -> ScenarioOutput:
    convention = _choice(p, "convention", CONVENTIONS)
    dim = p["dim"]
    grid = _box_grid(p)
    coupling = _coupling(p)
    J = _jump(p["jump"], dim)
    x0 = _vector(p["x0"], dim, "x0")
    if not grid.contains(x0):
        raise ConfigException(f"x0 {x0.tolist()} lies outside the box")
    traj = solve_master(_initial_field(p["U0"], grid), coupling, CommonPoisson(p["rate"], J), p["t"], p["dt"], p["discount"])
    grid_value = traj.evaluate(p["t"], x0.reshape(1, -1))[0]
    estimate = estimate_value_mc(
        x0, p["t"], traj, coupling, J, p["rate"], p["discount"], p["dt"], p["n_paths"], seed, convention, threads
    )
    allowed = 3.0 * estimate.stderr + (float(np.max(grid.spacing)) + p["dt"])
    gap = np.abs(estimate.mean - grid_value)
    expected_jumps = p["rate"] * p["t"]
    rows = [[i, estimate.mean[i], estimate.stderr[i], grid_value[i], gap[i], allowed[i]] for i in range(dim)]
    return ScenarioOutput(
        results={
            "mc_mean": estimate.mean,
            "mc_stderr": estimate.stderr,
            "grid_value": grid_value,
            "mean_jumps": estimate.mean_jumps,
            "jumps_stderr": estimate.jumps_stderr,
            "expected_jumps": expected_jumps,
            "paths_left_box": estimate.paths_left_box,
            "condition_number": J.condition_number,
        },
        verdicts={
            "value_within_bound": bool(np.all(gap <= allowed)),
            "jump_count_within_5_stderr": abs(estimate.mean_jumps - expected_jumps) <= 5.0 * estimate.jumps_stderr,
        },
        scheme=dict(traj.scheme_meta, convention=convention, n_paths=p["n_paths"]),
        blocks=[_master_block(traj)],
        tables=[_Table("mc_value.csv", ["component", "mc_mean", "mc_stderr", "grid_value", "abs_gap", "allowed"], rows)],
    )


@_register(
    "abm-path",
    "one agent-based path of the population state with common jumps",
    {
        "dim": 2,
        "x0": [1.0, 2.0],
        "A": 0.0,
        "B": 0.0,
        "C": -0.5,
        "D": 0.0,
        "require_monotone": False,
        "jump": {"kind": "split_half", "delta": 0.1},
        "rate": 1.0,
        "t_f": 5.0,
        "dt": 0.01,
    },
)
def _run_abm(p: Dict[str, Any], seed: int, threads: Optional[int]) -> ScenarioOutput:
    dim = p["dim"]
    coupling = _coupling(p)
    J = _jump(p["jump"], dim)
    x0 = _vector(p["x0"], dim, "x0")
    path = simulate_abm(x0, coupling, J, p["rate"], p["t_f"], p["dt"], seed)
    components = {f"Y{i}": path.Y[:, i].reshape(-1, 1) for i in range(dim)}
    block = _TrajectoryBlock(path.times, x0.reshape(1, -1), components)
    rows = []
    for i, t in enumerate(path.jump_times):
        # both sides of a jump are recorded under the same time
        k = int(np.nonzero(path.times == t)[0][-1])
        rows.append([i, t] + list(path.Y[k - 1]) + list(path.Y[k]))
    header = ["jump", "time"] + [f"before{i}" for i in range(dim)] + [f"after{i}" for i in range(dim)]
    return ScenarioOutput(
        results={
            "n_jumps": len(path.jump_times),
            "expected_jumps": p["rate"] * p["t_f"],
            "final_state": path.final_state,
        },
        scheme={"dt": p["dt"], "integrator": "rk4", "seed": seed},
        blocks=[block],
        tables=[_Table("abm_jumps.csv", header, rows)],
    )


@_register(
    "monotonicity-report",
    "monotonicity propagation for every noise variant on one grid",
    dict(_MASTER_DEFAULTS, **_VARIANT_DEFAULTS["deterministic"], rate=2.0, atoms=_VARIANT_DEFAULTS["mixture"]["atoms"]),
)
def _run_monotonicity_report(p: Dict[str, Any], seed: int, threads: Optional[int]) -> ScenarioOutput:
    output = ScenarioOutput()
    rows: List[List[Any]] = []
    for kind in _VARIANT_DEFAULTS:
        traj, report, _, _ = _run_master_variant(kind, p, seed)
        output.verdicts[f"{kind}_monotone"] = report.holds
        output.results[kind] = {"worst_pairing": report.worst, "tol": report.tol, "pair_count": report.pair_count}
        output.scheme[kind] = traj.scheme_meta
        output.blocks.append(_master_block(traj, prefix=f"{kind}:"))
        rows.extend(_monotonicity_rows(report, kind))
    output.verdicts["all_monotone"] = all(output.verdicts.values())
    output.tables.append(_Table("monotonicity_report.csv", _MONOTONICITY_HEADER, rows))
    return output


@_register(
    "lipschitz-report",
    "measured space-Lipschitz constants against the monotonicity bound",
    dict(
        _MASTER_DEFAULTS,
        D=0.0,
        jump={"S": 0.8, "e": 0.0},
        rates=[0.0, 1.0, 10.0],
        alpha=0.5,
        case=G_MONOTONE,
        dt=0.02,
        slack=0.1,
    ),
)
def _run_lipschitz(p: Dict[str, Any], seed: int, threads: Optional[int]) -> ScenarioOutput:
    case = _choice(p, "case", (G_MONOTONE, F_MONOTONE))
    grid = _box_grid(p)
    coupling = _coupling(p)
    U0 = _initial_field(p["U0"], grid)
    J = _jump(p["jump"], p["dim"])
    lip_U0 = float(measured_lipschitz(U0)[0])
    output = ScenarioOutput()
    rows = []
    betas = []
    for rate in p["rates"]:
        traj = solve_master(U0, coupling, CommonPoisson(rate, J), p["t_f"], p["dt"], p["discount"])
        budget = lipschitz_budget(coupling, p["alpha"], rate, J.op_norm_S, lip_U0, t_f=p["t_f"], case=case)
        check = check_lipschitz_bound(traj, budget, p["slack"])
        betas.append(budget.beta)
        label = f"rate{rate:g}"
        output.verdicts[f"{label}_bound_holds"] = check.holds
        output.results[label] = {
            "beta": budget.beta,
            "bound": budget.bound,
            "worst_ratio": check.worst_ratio,
            "worst_time": check.time,
            "max_measured": float(np.max(check.measured)),
        }
        output.scheme[label] = traj.scheme_meta
        output.blocks.append(_master_block(traj, prefix=f"{label}:"))
        rows.append([rate, budget.beta, budget.bound, check.worst_ratio, check.time, check.holds])
    output.results["lip_U0"] = lip_U0
    output.results["s_norm"] = J.op_norm_S
    if J.op_norm_S <= 1.0:
        output.verdicts["beta_independent_of_rate"] = all(b == betas[0] for b in betas)
    output.tables.append(_Table("lipschitz_report.csv", ["rate", "beta", "bound", "worst_ratio", "time", "holds"], rows))
    return output


# torus scenarios

_TORUS_DEFAULTS: Dict[str, Any] = {
    "n": 50,
    "nu": 0.05,
    "horizon": 1.0,
    "dt": 2e-3,
    "m0": {"kind": "bump", "center": 0.3, "width": 0.1},
    "picard": dict(DEFAULT_PICARD),
}


@_register(
    "conserved-momentum",
    "time invariance of the mean control for x-independent Hamiltonians",
    dict(
        _TORUS_DEFAULTS,
        n=64,
        nu=0.1,
        horizon=0.5,
        dt=5e-4,
        lambda_disc=0.0,
        f_slope=1.0,
        phi={"kind": "sine", "amplitude": 0.2},
        m0={"kind": "bump", "center": 0.4, "width": 0.15},
        drift_amplitude=1.0,
        delta=0.5,
    ),
)
def _run_conserved_momentum(p: Dict[str, Any], seed: int, threads: Optional[int]) -> ScenarioOutput:
    n = p["n"]
    m0 = _torus_density(p["m0"], n)
    phi = _torus_field(p["phi"], n, "phi")
    lam = p["lambda_disc"]
    picard = _picard(p)
    separable = solve_mfg_discounted(_separable(p["f_slope"]), lam, None, p["nu"], p["horizon"], m0, phi, dt=p["dt"], picard=picard)
    with _model_errors():
        counter_H = Quadratic(lambda t, x, m: p["drift_amplitude"] * np.sin(2.0 * np.pi * x), p["delta"], name="sine_drift")
    counter = solve_mfg_discounted(counter_H, lam, None, p["nu"], p["horizon"], m0, phi, dt=p["dt"], picard=picard)
    A_sep = conserved_momentum(separable)
    A_counter = conserved_momentum(counter)
    tol = 10.0 * (separable.h ** 2 + p["dt"])
    rows = [[t, a, b] for t, a, b in zip(A_sep.times, A_sep.A, A_counter.A)]
    return ScenarioOutput(
        results={
            "momentum_drift": A_sep.drift,
            "counterexample_drift": A_counter.drift,
            "tol": tol,
            "picard_iterations": separable.picard_iterations,
            "converged": separable.converged,
            "counterexample_converged": counter.converged,
            "residuals": separable.residuals,
        },
        verdicts={
            "separable_conserved": A_sep.drift <= tol,
            "counterexample_not_conserved": A_counter.drift > tol,
        },
        scheme=dict(separable.settings, hjb="explicit", fokker_planck="hybrid_flux"),
        blocks=[_torus_block(separable.times, {"u": separable.u, "m": separable.m})],
        tables=[_Table("momentum.csv", ["time", "A_separable", "A_counterexample"], _subsample_rows(rows))],
    )


_STRONG_DEFAULTS: Dict[str, Any] = {
    "n": 100,
    "nu": 0.05,
    "horizon": 1.0,
    "dt": 5e-4,
    "lambda_ctrl": 1.5,
    "phi": {"kind": "cosine", "amplitude": 0.3},
    "m0": {"kind": "bump", "center": 0.25, "width": 0.05},
    "scan": dict(DEFAULT_SCAN),
}


def _refined_roots(
    result: StrongCouplingResult, m0: ScalarField1D, lambda_ctrl: float, scan: Dict[str, Any], refine_factor: int
) -> Tuple[Dict[str, Any], List[float], bool]:
    """
    Rescan the mean-control gap refine_factor times finer. The roots agree
    when both scans find the same count and each pair is within one coarse
    scan spacing.
    """
    fine_scan = dict(scan, n_scan=(int(scan["n_scan"]) - 1) * refine_factor + 1)
    _, _, fine_roots = scan_mean_control(result.u0, m0, lambda_ctrl, fine_scan)
    spacing = (scan["A_max"] - scan["A_min"]) / (int(scan["n_scan"]) - 1)
    agree = len(fine_roots) == len(result.A_roots) and all(
        abs(a - b) <= spacing for a, b in zip(result.A_roots, fine_roots)
    )
    return fine_scan, fine_roots, agree


@_register(
    "strong-coupling-roots",
    "fixed points of the mean-control equation and the matching solutions",
    dict(_STRONG_DEFAULTS, refine_factor=10),
)
def _run_strong_coupling(p: Dict[str, Any], seed: int, threads: Optional[int]) -> ScenarioOutput:
    n = p["n"]
    _spec_keys(p["scan"], "scan", DEFAULT_SCAN)
    phi = _torus_field(p["phi"], n, "phi")
    m0 = _torus_density(p["m0"], n)
    result = solve_strong_coupling(phi, m0, p["lambda_ctrl"], p["nu"], p["horizon"], dt=p["dt"], scan=p["scan"])
    scan = dict(DEFAULT_SCAN, **p["scan"])
    fine_scan, fine_roots, agree = _refined_roots(result, m0, p["lambda_ctrl"], scan, p["refine_factor"])
    tol = 10.0 * ((1.0 / n) ** 2 + p["dt"])
    drifts = [conserved_momentum(sol).drift for sol in result.solutions]
    rows = []
    for i, root in enumerate(result.A_roots):
        phi_at = float(np.interp(root, result.A_grid, result.phi_of_A))
        fine = fine_roots[i] if i < len(fine_roots) else None
        rows.append([i, root, root - phi_at, drifts[i], fine])
    blocks = []
    if result.solutions:
        first = result.solutions[0]
        blocks.append(_torus_block(first.times, {"u": first.u, "m": first.m}))
    scan_rows = [[a, v, a - v] for a, v in zip(result.A_grid, result.phi_of_A)]
    return ScenarioOutput(
        results={
            "roots": result.A_roots,
            "fine_roots": fine_roots,
            "n_roots": len(result.A_roots),
            "momentum_drift": drifts,
            "momentum_tol": tol,
            "gap_increasing": result.is_increasing,
        },
        verdicts={
            "roots_found": bool(result.A_roots),
            "fine_scan_agrees": agree,
            "momentum_conserved": all(d <= tol for d in drifts),
        },
        scheme={"dt": p["dt"], "h": 1.0 / n, "scan": scan, "fine_scan": fine_scan, "hjb": "cole_hopf"},
        blocks=blocks,
        tables=[
            _Table("roots.csv", ["root", "A", "gap_at_root", "momentum_drift", "fine_A"], rows),
            _Table("phi_scan.csv", ["A", "Phi", "gap"], scan_rows),
        ],
    )


@_register(
    "uniqueness-threshold",
    "uniqueness threshold of the strongly coupled model and a semiconcave check",
    dict(
        _STRONG_DEFAULTS,
        c=1.0,
        n=64,
        dt=2e-3,
        phi={"kind": "cosine", "amplitude": 0.025},
        run_check=True,
        refine_factor=10,
    ),
)
def _run_uniqueness(p: Dict[str, Any], seed: int, threads: Optional[int]) -> ScenarioOutput:
    c, horizon = p["c"], p["horizon"]
    with _model_errors():
        threshold = uniqueness_threshold(c, horizon)
    output = ScenarioOutput(
        results={"threshold": threshold, "c": c, "horizon": horizon, "lambda_ctrl": p["lambda_ctrl"]},
        verdicts={"below_threshold": p["lambda_ctrl"] < threshold},
        scheme={"formula": "(1 + c T) / (c T)"},
    )
    if not p["run_check"]:
        return output

    _spec_keys(p["scan"], "scan", DEFAULT_SCAN)
    n = p["n"]
    phi = _torus_field(p["phi"], n, "phi")
    m0 = _torus_density(p["m0"], n)
    result = solve_strong_coupling(phi, m0, p["lambda_ctrl"], p["nu"], horizon, dt=p["dt"], scan=p["scan"], c=c)
    concave = semiconcavity_check(result.u0, c)
    scan = dict(DEFAULT_SCAN, **p["scan"])
    fine_scan, fine_roots, agree = _refined_roots(result, m0, p["lambda_ctrl"], scan, p["refine_factor"])
    output.results.update({
        "roots": result.A_roots,
        "fine_roots": fine_roots,
        "semiconcavity_violation": concave.max_violation,
        "semiconcavity_tol": concave.tol,
    })
    output.verdicts.update({
        "semiconcave": concave.holds,
        "unique_root": len(result.A_roots) == 1,
        "gap_increasing": result.is_increasing,
        "fine_scan_agrees": agree,
    })
    output.scheme.update({"dt": p["dt"], "h": 1.0 / n, "scan": scan, "fine_scan": fine_scan})
    if result.solutions:
        sol = result.solutions[0]
        output.blocks.append(_torus_block(sol.times, {"u": sol.u, "m": sol.m}))
    return output


def _sweep_output(rows, p: Dict[str, Any], verdict_on_u: bool) -> ScenarioOutput:
    finite = [row for row in rows if not row.is_sentinel]
    u_norms = [row.u_l2_sup for row in finite]
    w1 = [row.w1_max for row in finite]
    u_ratios = _ratios(u_norms)
    output = ScenarioOutput(
        results={
            "lambdas": [row.lambda_disc for row in rows],
            "u_l2_sup": u_norms,
            "w1_max": w1,
            "u_ratios": u_ratios,
            "failed_rows": [row.lambda_disc for row in finite if row.failed],
        },
        verdicts={
            "w1_decreasing": _strictly_decreasing(w1),
            "all_converged": all(row.converged for row in finite),
        },
        scheme={"dt": p["dt"], "h": 1.0 / p["n"], "picard": dict(DEFAULT_PICARD, **p["picard"])},
    )
    if verdict_on_u:
        output.verdicts["u_decreasing"] = _strictly_decreasing(u_norms)
        output.verdicts["u_ratios_in_range"] = all(1.6 <= r <= 2.4 for r in u_ratios)
    table_rows = [
        [row.lambda_disc, row.u_l2_sup, row.w1_max, row.converged, row.picard_iterations, row.failed, row.message]
        for row in rows
    ]
    output.tables.append(
        _Table(
            "lambda_sweep.csv",
            ["lambda", "u_l2_sup", "w1_max", "converged", "picard_iterations", "failed", "message"],
            table_rows,
        )
    )
    return output


@_register(
    "mfg-lambda-sweep",
    "discounted MFG against its agent-based limit for growing discount",
    dict(
        _TORUS_DEFAULTS,
        lambdas=[4.0, 8.0, 16.0, 32.0, 64.0],
        hamiltonian="separable",
        f_slope=1.0,
        drift_amplitude=1.0,
        delta=0.1,
        terminal={"kind": "zero"},
    ),
)
def _run_lambda_sweep(p: Dict[str, Any], seed: int, threads: Optional[int]) -> ScenarioOutput:
    H = _hamiltonian(p)
    # H(x, 0, m) = 0 for the drift Hamiltonian: u = 0 solves every row unless u(T) != 0
    if isinstance(H, Quadratic) and p["terminal"].get("kind") == "zero":
        raise ConfigException("the quadratic Hamiltonian needs a nonzero terminal field")
    n = p["n"]
    m0 = _torus_density(p["m0"], n)
    terminal = _torus_field(p["terminal"], n, "terminal")
    rows = lambda_sweep(p["lambdas"], H, p["nu"], m0, p["horizon"], dt=p["dt"], terminal=terminal, picard=_picard(p), threads=threads)
    output = _sweep_output(rows, p, isinstance(H, Separable))
    limit = solve_fp(lambda t, x, m: H.dp(t, x, np.zeros_like(m), m), p["nu"], m0, p["horizon"], dt=p["dt"])
    output.blocks.append(_torus_block(limit.times, {"m_limit": limit.m}))
    output.scheme["hamiltonian"] = H.describe()
    return output


@_register(
    "relative-cost",
    "relative running cost model against its nonlinear diffusion limit",
    dict(
        _TORUS_DEFAULTS,
        lambdas=[4.0, 8.0, 16.0, 32.0, 64.0],
        psi_slope=0.1,
        dt=5e-4,
        m0={"kind": "bump", "center": 0.5, "width": 0.2},
        terminal={"kind": "zero"},
    ),
)
def _run_relative_cost(p: Dict[str, Any], seed: int, threads: Optional[int]) -> ScenarioOutput:
    slope = p["psi_slope"]

    def psi(m: np.ndarray) -> np.ndarray:
        return slope * m

    H = Separable.quadratic()
    n = p["n"]
    m0 = _torus_density(p["m0"], n)
    terminal = _torus_field(p["terminal"], n, "terminal")
    rows = lambda_sweep(
        p["lambdas"], H, p["nu"], m0, p["horizon"], dt=p["dt"], terminal=terminal, psi=psi, picard=_picard(p), threads=threads
    )
    output = _sweep_output(rows, p, False)
    limit = solve_fp_relative_cost(H, psi, p["nu"], m0, p["horizon"], dt=p["dt"])
    output.blocks.append(_torus_block(limit.times, {"m_limit": limit.m}))
    output.scheme["psi"] = f"{slope:g} m"
    return output


@_register(
    "higher-order-fp",
    "first order correction in 1/lambda of the agent-based Fokker-Planck limit",
    dict(_TORUS_DEFAULTS, lambda_disc=64.0, f_slope=1.0, dt=1e-3),
)
def _run_higher_order(p: Dict[str, Any], seed: int, threads: Optional[int]) -> ScenarioOutput:
    n = p["n"]
    lam = p["lambda_disc"]
    if not lam > 0:
        raise ConfigException(f"parameter lambda_disc must be positive, got {lam}")
    H = _separable(p["f_slope"])
    m0 = _torus_density(p["m0"], n)
    mfg = solve_mfg_discounted(H, lam, None, p["nu"], p["horizon"], m0, dt=p["dt"], picard=_picard(p))
    higher = solve_fp_higher_order(H, lam, p["nu"], m0, p["horizon"], dt=p["dt"])
    zeroth = solve_fp(lambda t, x, m: H.dp(t, x, np.zeros_like(m), m), p["nu"], m0, p["horizon"], dt=p["dt"])
    err_higher = float(np.max(np.abs(higher.m - mfg.m)))
    err_zeroth = float(np.max(np.abs(zeroth.m - mfg.m)))
    m_final = mfg.m[-1]
    coefficient = effective_diffusion(H, lam, p["nu"], m_final)
    closed_form = p["nu"] + p["f_slope"] * m_final / lam
    closed_gap = float(np.max(np.abs(coefficient - closed_form)))
    x = np.arange(n) / n
    rows = [[x[i], m_final[i], higher.m[-1][i], zeroth.m[-1][i], coefficient[i]] for i in range(n)]
    return ScenarioOutput(
        results={
            "error_higher": err_higher,
            "error_zeroth": err_zeroth,
            "effective_diffusion_gap": closed_gap,
            "min_effective_diffusion": float(np.min(coefficient)),
            "picard_iterations": mfg.picard_iterations,
            "converged": mfg.converged,
        },
        verdicts={
            "higher_order_closer": err_higher <= err_zeroth,
            "effective_diffusion_closed_form": closed_gap <= 1e-10,
        },
        scheme={"dt": p["dt"], "h": 1.0 / n, "lambda_disc": lam},
        blocks=[_torus_block(mfg.times, {"m_mfg": mfg.m, "m_higher": higher.m, "m_zeroth": zeroth.m})],
        tables=[_Table("higher_order.csv", ["x", "m_mfg", "m_higher", "m_zeroth", "effective_diffusion"], rows)],
    )


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def _write_csv(path: str, header: List[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _trajectory_rows(blocks: List[_TrajectoryBlock]) -> Iterator[List[Any]]:
    for block in blocks:
        for k, t in enumerate(block.times):
            for node in range(block.coords.shape[0]):
                coords = list(block.coords[node])
                for name, values in block.components.items():
                    yield [t, node] + coords + [name, values[k][node]]


def _write_trajectory(path: str, blocks: List[_TrajectoryBlock]) -> None:
    dim = max((block.coords.shape[1] for block in blocks), default=1)
    header = ["time", "node"] + [f"x{i}" for i in range(dim)] + ["component", "value"]
    _write_csv(path, header, _trajectory_rows(blocks))


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isfinite(value):
            return value
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def _write_summary(out_dir: str, summary: Dict[str, Any]) -> None:
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as f:
        json.dump(_jsonable(summary), f, indent=2, allow_nan=False)
        f.write("\n")


def run_scenario(config: ScenarioConfig, threads: Optional[int] = None) -> int:
    """
    Validate and run one scenario, writing its artifacts under
    config.out_dir.

    Parameters
    ----------
    config: ScenarioConfig
        scenario, seed, parameters and output directory
    threads: int
        worker threads for Monte Carlo paths and lambda rows, process
        default when omitted

    Returns
    ----------
    status: int
        EXIT_OK, EXIT_CONFIG (nothing written) or EXIT_SOLVER (summary.json
        with "failed": true)
    """
    try:
        scenario = get_scenario(config.scenario)
        params, defaulted = resolve_params(scenario, config.params)
    except ConfigException as e:
        error(f"invalid configuration: {e}")
        return EXIT_CONFIG

    summary: Dict[str, Any] = {
        "scenario": scenario.name,
        "description": scenario.description,
        "schema_version": SCHEMA_VERSION,
        "seed": config.seed,
        "failed": False,
        "parameters": params,
        "defaults_applied": {name: params[name] for name in defaulted},
    }
    info(f"running scenario {scenario.name} (seed {config.seed})")
    if isEnabledForTrace():
        dump("parameters", json.dumps(_jsonable(params), indent=2))
    try:
        output = scenario.runner(params, config.seed, threads)
    except ConfigException as e:
        error(f"invalid configuration: {e}")
        return EXIT_CONFIG
    except MfgLabException as e:
        error(f"scenario {scenario.name} failed: {type(e).__name__}: {e}")
        os.makedirs(config.out_dir, exist_ok=True)
        summary["failed"] = True
        summary["error"] = {"type": type(e).__name__, "message": str(e)}
        summary["files"] = ["summary.json"]
        _write_summary(config.out_dir, summary)
        return EXIT_SOLVER

    os.makedirs(config.out_dir, exist_ok=True)
    _write_trajectory(os.path.join(config.out_dir, "trajectory.csv"), output.blocks)
    files = ["trajectory.csv"]
    for table in output.tables:
        _write_csv(os.path.join(config.out_dir, table.name), table.header, table.rows)
        files.append(table.name)
    files.append("summary.json")
    summary.update({
        "results": output.results,
        "verdicts": output.verdicts,
        "all_verdicts_hold": all(output.verdicts.values()),
        "scheme": output.scheme,
        "files": files,
    })
    _write_summary(config.out_dir, summary)
    failing = sorted(name for name, ok in output.verdicts.items() if not ok)
    if failing:
        warning(f"scenario {scenario.name}: verdict(s) not met: {', '.join(failing)}")
    info(f"scenario {scenario.name} done, artifacts in {config.out_dir}")
    return EXIT_OK
