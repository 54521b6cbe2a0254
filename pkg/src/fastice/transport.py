"""First-order upwind finite-volume transport of cell tracers.

Face-normal velocities are edge-midpoint averages of the nodal velocity.
Boundary faces carry no flux (zero Dirichlet velocity, Neumann tracers), so
the update conserves ``sum(field) * dx * dy`` up to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Mesh


class CFLError(ValueError):
    pass


@dataclass
class TransportProblem:
    mesh: Mesh
    field: np.ndarray
    v: np.ndarray
    d: float
    dt: float
    # "A" fields are clipped to [0, 1], "h" fields to [0, inf)
    kind: str = "h"

    def __post_init__(self):
        if self.field.shape != self.mesh.cell_shape:
            raise ValueError(f"field shape {self.field.shape} does not match mesh {self.mesh.cell_shape}")
        if self.v.shape != (*self.mesh.node_shape, 2):
            raise ValueError("velocity does not match mesh")
        if not self.dt > 0 or self.d < 0:
            raise ValueError("need dt > 0 and d >= 0")
        if self.kind not in ("h", "A"):
            raise ValueError(f"unknown tracer kind {self.kind!r}")


@dataclass
class TransportResult:
    field: np.ndarray
    cfl: float
    clipped: int
    # extrema of the unclipped update
    raw_min: float
    raw_max: float


def face_velocities(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normal velocities on x-faces (ny, nx+1) and y-faces (ny+1, nx)."""
    u_x = 0.5 * (v[:-1, :, 0] + v[1:, :, 0])
    v_y = 0.5 * (v[:, :-1, 1] + v[:, 1:, 1])
    return u_x, v_y


def cfl_numbers(v: np.ndarray, mesh: Mesh, dt: float) -> tuple[float, float]:
    """(max face Courant number, max fraction of a cell emptied in one step)."""
    u_x, v_y = face_velocities(v)
    face = max(np.abs(u_x).max() * dt / mesh.dx, np.abs(v_y).max() * dt / mesh.dy)
    out = (np.maximum(u_x[:, 1:], 0) - np.minimum(u_x[:, :-1], 0)) * dt / mesh.dx \
        + (np.maximum(v_y[1:, :], 0) - np.minimum(v_y[:-1, :], 0)) * dt / mesh.dy
    return float(face), float(out.max())


def advect_diffuse(problem: TransportProblem) -> TransportResult:
    mesh, c, dt = problem.mesh, problem.field, problem.dt
    face, outflow = cfl_numbers(problem.v, mesh, dt)
    if outflow > 1.0:
        raise CFLError(f"CFL violation: max face CFL {face:.3g}, cell outflow fraction {outflow:.3g}")
    if problem.d > 0:
        k = problem.d * dt * (1.0 / mesh.dx**2 + 1.0 / mesh.dy**2)
        if k > 0.5:
            raise CFLError(f"diffusion number {k:.3g} exceeds explicit stability limit")

    u_x, v_y = face_velocities(problem.v)
    Fx = np.zeros((mesh.ny, mesh.nx + 1))
    ui = u_x[:, 1:-1]
    Fx[:, 1:-1] = np.where(ui > 0, ui * c[:, :-1], ui * c[:, 1:]) * mesh.dy
    Fy = np.zeros((mesh.ny + 1, mesh.nx))
    vi = v_y[1:-1, :]
    Fy[1:-1, :] = np.where(vi > 0, vi * c[:-1, :], vi * c[1:, :]) * mesh.dx

    if problem.d > 0:
        Fx[:, 1:-1] -= problem.d * (c[:, 1:] - c[:, :-1]) / mesh.dx * mesh.dy
        Fy[1:-1, :] -= problem.d * (c[1:, :] - c[:-1, :]) / mesh.dy * mesh.dx

    div = (Fx[:, 1:] - Fx[:, :-1]) + (Fy[1:, :] - Fy[:-1, :])
    new = c - dt / mesh.cell_area * div
    raw_min, raw_max = float(new.min()), float(new.max())
    hi = 1.0 if problem.kind == "A" else np.inf
    clipped = int(np.count_nonzero((new < 0) | (new > hi)))
    if clipped:
        new = np.clip(new, 0.0, hi)
    return TransportResult(new, face, clipped, raw_min, raw_max)


def total_mass(field: np.ndarray, mesh: Mesh) -> float:
    return float(np.sum(field) * mesh.cell_area)
