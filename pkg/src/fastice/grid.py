"""Uniform quadrilateral mesh, field layout and staggering helpers.

Velocity lives at mesh nodes as an array of shape ``(ny+1, nx+1, 2)``;
thickness and concentration live at cell centres, shape ``(ny, nx)``.
Index order is ``[j, i]`` with ``j`` along y, so arrays are row-major over
nodes/cells.  Boundary nodes carry the homogeneous Dirichlet velocity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ConfigError, ScenarioSpec


@dataclass(frozen=True)
class Mesh:
    nx: int
    ny: int
    dx: float
    dy: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"mesh needs at least 2x2 cells, got {self.nx}x{self.ny}")
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError("cell sizes must be positive")

    @property
    def node_shape(self) -> tuple[int, int]:
        return (self.ny + 1, self.nx + 1)

    @property
    def cell_shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def lengths(self) -> tuple[float, float]:
        return (self.nx * self.dx, self.ny * self.dy)

    def node_coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.origin[0] + self.dx * np.arange(self.nx + 1)
        y = self.origin[1] + self.dy * np.arange(self.ny + 1)
        return np.meshgrid(x, y)

    def cell_coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.origin[0] + self.dx * (np.arange(self.nx) + 0.5)
        y = self.origin[1] + self.dy * (np.arange(self.ny) + 0.5)
        return np.meshgrid(x, y)

    def boundary_mask(self) -> np.ndarray:
        """True on boundary nodes."""
        mask = np.zeros(self.node_shape, dtype=bool)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        return mask


def make_mesh(nx: int, ny: int, lengths) -> Mesh:
    """Mesh of ``nx`` by ``ny`` cells covering ``lengths`` (scalar or (Lx, Ly))."""
    Lx, Ly = (lengths, lengths) if np.isscalar(lengths) else lengths
    if nx < 2 or ny < 2:
        raise ValueError(f"mesh needs at least 2x2 cells, got {nx}x{ny}")
    if not (Lx > 0 and Ly > 0):
        raise ValueError("domain lengths must be positive")
    return Mesh(int(nx), int(ny), Lx / nx, Ly / ny)


@dataclass
class State:
    mesh: Mesh
    t: float
    v: np.ndarray
    h: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        if self.v.shape != (*self.mesh.node_shape, 2):
            raise ValueError(f"velocity shape {self.v.shape} does not match mesh")
        if self.h.shape != self.mesh.cell_shape or self.A.shape != self.mesh.cell_shape:
            raise ValueError("tracer shapes do not match mesh")

    def copy(self) -> "State":
        return State(self.mesh, self.t, self.v.copy(), self.h.copy(), self.A.copy())


def mesh_for(spec: ScenarioSpec) -> Mesh:
    n = spec.cells_per_side
    return make_mesh(n, n, spec.domain_length)


def eval_initial_condition(spec: ScenarioSpec, mesh: Mesh) -> State:
    """Sample the analytic initial fields at their native locations."""
    if spec.initial_condition not in ("rest", "sine_velocity"):
        raise ConfigError(f"unknown initial condition {spec.initial_condition!r}")
    Lx, Ly = mesh.lengths
    xc, _ = mesh.cell_coords()
    h = spec.h_mean - spec.h_amplitude * np.sin(np.pi * (xc - mesh.origin[0]) / Lx)
    A = np.ones(mesh.cell_shape)
    v = np.zeros((*mesh.node_shape, 2))
    if spec.initial_condition == "sine_velocity":
        xn, yn = mesh.node_coords()
        profile = (spec.velocity_amplitude
                   * np.sin(np.pi * (xn - mesh.origin[0]) / Lx)
                   * np.sin(np.pi * (yn - mesh.origin[1]) / Ly))
        v[..., 0] = profile
        if spec.velocity_mode == "both":
            v[..., 1] = profile
    v[mesh.boundary_mask()] = 0.0
    return State(mesh, 0.0, v, h, A)


def node_to_cell_average(field: np.ndarray, mesh: Mesh) -> np.ndarray:
    """Average of the four corner nodes; trailing component axes are kept."""
    if field.shape[:2] != mesh.node_shape:
        raise ValueError(f"node field shape {field.shape} does not match mesh {mesh.node_shape}")
    return 0.25 * (field[:-1, :-1] + field[:-1, 1:] + field[1:, :-1] + field[1:, 1:])


def cell_to_node_average(field: np.ndarray, mesh: Mesh) -> np.ndarray:
    """Average of the (up to four) cells touching each node."""
    if field.shape[:2] != mesh.cell_shape:
        raise ValueError(f"cell field shape {field.shape} does not match mesh {mesh.cell_shape}")
    tail = field.shape[2:]
    total = np.zeros((*mesh.node_shape, *tail))
    count = np.zeros(mesh.node_shape)
    for dj in (0, 1):
        for di in (0, 1):
            total[dj:dj + mesh.ny, di:di + mesh.nx] += field
            count[dj:dj + mesh.ny, di:di + mesh.nx] += 1.0
    return total / count.reshape(count.shape + (1,) * len(tail))
