"""Model constants, scenario settings and the YAML config loader.

Defaults are the standard landfast-ice parameter set (e = 2, k_t = 0.15,
P* = 27.5 kN/m^2, ...).  The experiment presets override the critical
thickness to 2.5 m; the library default stays at 2 m.

Config files are YAML with three optional top-level sections plus an
optional base preset::

    preset: ex1_lfi          # start from a named preset
    params:                  # any Params field
      k_t: 0.15
    scenario:                # any ScenarioSpec field
      duration: 86400.0
      wind: [20.0, 0.0]
    solver:                  # any SolverConfig field
      rtol: 1.0e-8

Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

DAY = 86400.0


class ConfigError(ValueError):
    """Raised for malformed config files and violated parameter invariants."""


@dataclass(frozen=True)
class Params:
    e: float = 2.0
    k_t: float = 0.15
    h_crit: float = 2.0
    k2: float = 5.0
    alpha_b: float = 20.0
    v0: float = 5e-8
    rho: float = 900.0
    rho_a: float = 1.3
    rho_o: float = 1026.0
    C_a: float = 1.2e-3
    C_o: float = 5.5e-3
    C_cor: float = 1.46e-4
    P_star: float = 27.5e3
    c_star: float = 20.0
    delta_min: float = 2e-9
    d_h: float = 0.0
    d_A: float = 0.0
    # "triangle": d_I^2 + (d_II^2 + 4 d_III^2)/e^2 ; "deviatoric": 1/2 eps':eps'
    invariant: str = "triangle"

    def __post_init__(self):
        validate_params(self)


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 100
    rtol: float = 1e-8
    atol: float = 1e-12
    # Picard iterations before switching to Newton; 0 means Newton from the start
    picard_iters: int = 3
    newton: bool = True
    # "auto": sparse Cholesky for symmetric positive definite systems, sparse LU
    # otherwise; "direct": always sparse LU; "bicgstab": Jacobi-preconditioned BiCGStab
    linear_solver: str = "auto"
    linear_rtol: float = 1e-10
    min_damping: float = 2.0**-10
    # "residual": halve the step until the residual norm drops;
    # "energy": step-length search on the convex energy where one exists
    line_search: str = "residual"
    h_min: float = 1e-3
    A_min: float = 0.01
    # Gauss points per direction for the stress integral (1 = cell centre)
    quadrature: int = 1

    def __post_init__(self):
        validate_solver(self)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str = "custom"
    domain_length: float = 512e3
    cells_per_side: int = 64
    dt: float = 1800.0
    duration: float = 2 * DAY
    wind: tuple[float, float] = (0.0, 0.0)
    ocean_velocity: tuple[float, float] = (0.0, 0.0)
    ocean_drag: bool = True
    coriolis: bool = False
    surface_tilt: bool = False
    basal_stress: bool = True
    # "rest": v = 0; "sine_velocity": v = amp * sin(pi x/L) sin(pi y/L)
    initial_condition: str = "rest"
    h_mean: float = 2.5
    h_amplitude: float = 1.0
    velocity_amplitude: float = 0.05
    # "both" or "x": which components carry the sine_velocity profile
    velocity_mode: str = "both"
    snapshot_every: float = 0.5 * DAY
    polynya_threshold: float = 0.2
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        object.__setattr__(self, "wind", _pair(self.wind, "wind"))
        object.__setattr__(self, "ocean_velocity", _pair(self.ocean_velocity, "ocean_velocity"))
        if isinstance(self.solver, dict):
            object.__setattr__(self, "solver", SolverConfig(**self.solver))
        validate_scenario(self)

    @property
    def n_steps(self) -> int:
        return math.ceil(self.duration / self.dt - 1e-9)


def _pair(value, name):
    try:
        x, y = value
        return (float(x), float(y))
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a pair of numbers, got {value!r}") from None


def validate_params(p: Params) -> None:
    if not 0.0 <= p.k_t <= 1.0:
        raise ConfigError("k_t out of [0,1]")
    for name in ("e", "rho", "rho_a", "rho_o", "C_a", "C_o", "c_star",
                 "alpha_b", "v0", "delta_min"):
        if not getattr(p, name) > 0:
            raise ConfigError(f"{name} must be strictly positive")
    # P_star = 0 switches the internal stress off (free drift)
    for name in ("P_star", "k2", "d_h", "d_A", "h_crit", "C_cor"):
        if not getattr(p, name) >= 0:
            raise ConfigError(f"{name} must be non-negative")
    if p.e < 1:
        raise ConfigError("e must be >= 1")
    if p.invariant not in ("triangle", "deviatoric"):
        raise ConfigError(f"unknown strain-rate invariant {p.invariant!r}")


def validate_solver(s: SolverConfig) -> None:
    if s.max_iter < 1:
        raise ConfigError("max_iter must be >= 1")
    for name in ("rtol", "linear_rtol"):
        if not 0 < getattr(s, name) < 1:
            raise ConfigError(f"{name} out of (0,1)")
    if s.atol < 0 or s.picard_iters < 0:
        raise ConfigError("atol and picard_iters must be non-negative")
    if not 0 < s.min_damping <= 1:
        raise ConfigError("min_damping out of (0,1]")
    if s.line_search not in ("residual", "energy"):
        raise ConfigError(f"unknown line search {s.line_search!r}")
    if s.linear_solver not in ("auto", "direct", "bicgstab"):
        raise ConfigError(f"unknown linear solver {s.linear_solver!r}")
    if s.h_min <= 0 or not 0 <= s.A_min < 1:
        raise ConfigError("h_min must be > 0 and A_min in [0,1)")
    if s.quadrature not in (1, 2):
        raise ConfigError("quadrature must be 1 or 2 points per direction")


def validate_scenario(s: ScenarioSpec) -> None:
    if not s.dt > 0:
        raise ConfigError("dt must be positive")
    if s.duration < s.dt:
        raise ConfigError("duration shorter than one step")
    if s.cells_per_side < 2:
        raise ConfigError("cells_per_side must be >= 2")
    if not s.domain_length > 0:
        raise ConfigError("domain_length must be positive")
    if s.initial_condition not in ("rest", "sine_velocity"):
        raise ConfigError(f"unknown initial condition {s.initial_condition!r}")
    if s.velocity_mode not in ("both", "x"):
        raise ConfigError(f"unknown velocity mode {s.velocity_mode!r}")
    if s.snapshot_every <= 0:
        raise ConfigError("snapshot_every must be positive")
    if any(not math.isfinite(c) for c in (*s.wind, *s.ocean_velocity)):
        raise ConfigError("wind and ocean velocity must be finite")


_LANDFAST = dict(k_t=0.15, h_crit=2.5, k2=5.0, alpha_b=20.0)

PRESETS = ("ex1_vp", "ex1_lfi", "ex2_unforced", "ex3_constant_wind")


def preset(name: str) -> tuple[Params, ScenarioSpec]:
    """Parameter set and scenario for one of the named experiments."""
    if name == "ex1_lfi":
        return Params(**_LANDFAST), ScenarioSpec(name=name, wind=(20.0, 0.0), duration=2 * DAY)
    if name == "ex1_vp":
        params = Params(**{**_LANDFAST, "k_t": 0.0, "k2": 0.0})
        return params, ScenarioSpec(name=name, wind=(20.0, 0.0), duration=2 * DAY,
                                    basal_stress=False)
    if name == "ex2_unforced":
        return Params(**_LANDFAST), ScenarioSpec(
            name=name, duration=22 * DAY, ocean_drag=False,
            initial_condition="sine_velocity", h_amplitude=0.5)
    if name == "ex3_constant_wind":
        return Params(**_LANDFAST), ScenarioSpec(
            name=name, wind=(20.0, 0.0), duration=27 * DAY, h_amplitude=0.5)
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def _build(cls, base, overrides: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    overrides = {k: _coerce(getattr(base, k), v, k) for k, v in overrides.items()}
    try:
        return dataclasses.replace(base, **overrides)
    except TypeError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def _coerce(default, value, key):
    # PyYAML reads "1e-8" (no dot) as a string
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true/false")
        return value
    try:
        if isinstance(default, float):
            return float(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    return value


def from_dict(doc: dict[str, Any] | None) -> tuple[Params, ScenarioSpec]:
    doc = dict(doc or {})
    unknown = set(doc) - {"preset", "params", "scenario", "solver"}
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    if "preset" in doc:
        params, spec = preset(doc["preset"])
    else:
        params, spec = Params(), ScenarioSpec()
    sections = {}
    for key in ("params", "scenario", "solver"):
        value = doc.get(key) or {}
        if not isinstance(value, dict):
            raise ConfigError(f"section [{key}] must be a mapping")
        sections[key] = value
    params = _build(Params, params, sections["params"], "params")
    scenario_keys = dict(sections["scenario"])
    if "solver" in scenario_keys:
        raise ConfigError("solver settings belong in the top-level [solver] section")
    solver = _build(SolverConfig, spec.solver, sections["solver"], "solver")
    spec = _build(ScenarioSpec, spec, {**scenario_keys, "solver": solver}, "scenario")
    return params, spec


def load_config(path: str | Path) -> tuple[Params, ScenarioSpec]:
    """Read a YAML config; unspecified keys keep their defaults."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError(f"malformed config {path}: top level must be a mapping")
    return from_dict(doc)


def to_dict(params: Params, spec: ScenarioSpec) -> dict[str, Any]:
    scenario = dataclasses.asdict(spec)
    solver = scenario.pop("solver")
    scenario["wind"] = list(spec.wind)
    scenario["ocean_velocity"] = list(spec.ocean_velocity)
    return {"params": dataclasses.asdict(params), "scenario": scenario, "solver": solver}


def dump_config(params: Params, spec: ScenarioSpec, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(to_dict(params, spec), sort_keys=False))
