"""Scalar diagnostics and file output (CSV time series, legacy VTK snapshots)."""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .grid import Mesh, State, node_to_cell_average
from .params import Params
from .transport import total_mass

CSV_HEADER = ("t_seconds", "ke_inst", "ke_cum", "max_speed", "p99_scaled_speed",
              "polynya_area_m2", "mass_h_m3", "clip_count")


@dataclass
class DiagnosticsRow:
    t: float
    ke_inst: float
    ke_cum: float
    max_speed: float
    p99_scaled_speed: float
    polynya_area: float
    mass_h: float
    clip_count: int


def cell_speed(state: State) -> np.ndarray:
    """|v| with v averaged from the four corner nodes."""
    vc = node_to_cell_average(state.v, state.mesh)
    return np.hypot(vc[..., 0], vc[..., 1])


def kinetic_energy(state: State, params: Params) -> tuple[float, np.ndarray]:
    """Midpoint-rule integral of 1/2 rho h |v|^2 over the domain (J) and its integrand."""
    density = 0.5 * params.rho * state.h * cell_speed(state) ** 2
    return float(np.sum(density) * state.mesh.cell_area), density


def scaled_speed(state: State) -> np.ndarray:
    return state.A * cell_speed(state)


def p99_scaled_speed(state: State, min_concentration: float = 0.5) -> float:
    """99th percentile of A |v| over cells with A above ``min_concentration``."""
    values = scaled_speed(state)[state.A > min_concentration]
    return float(np.percentile(values, 99)) if values.size else 0.0


def polynya_area(A: np.ndarray, mesh: Mesh, threshold: float = 0.2) -> float:
    return float(np.count_nonzero(A < threshold) * mesh.cell_area)


def diagnostics_row(state: State, params: Params, prev: DiagnosticsRow | None = None,
                    clip_count: int = 0, threshold: float = 0.2) -> DiagnosticsRow:
    """Diagnostics at ``state.t``; ``ke_cum`` integrates ``ke_inst`` by trapezoids."""
    ke, _ = kinetic_energy(state, params)
    ke_cum = 0.0 if prev is None else prev.ke_cum + 0.5 * (ke + prev.ke_inst) * (state.t - prev.t)
    speed = np.hypot(state.v[..., 0], state.v[..., 1])
    return DiagnosticsRow(t=state.t, ke_inst=ke, ke_cum=ke_cum, max_speed=float(speed.max()),
                          p99_scaled_speed=p99_scaled_speed(state),
                          polynya_area=polynya_area(state.A, state.mesh, threshold),
                          mass_h=total_mass(state.h, state.mesh), clip_count=int(clip_count))


class TimeseriesWriter:
    """Append-mode CSV writer with the fixed diagnostics header."""

    def __init__(self, path: str | Path, append: bool = False):
        self.path = Path(path)
        fresh = not (append and self.path.exists())
        self._fh = open(self.path, "w" if fresh else "a", newline="")
        self._writer = csv.writer(self._fh)
        if fresh:
            self._writer.writerow(CSV_HEADER)
            self._fh.flush()

    def write(self, row: DiagnosticsRow):
        self._writer.writerow([repr(x) if isinstance(x, float) else x for x in astuple(row)])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_timeseries(rows, path: str | Path) -> None:
    with TimeseriesWriter(path) as w:
        for row in rows:
            w.write(row)


def read_timeseries(path: str | Path) -> list[DiagnosticsRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        types = [f.type for f in fields(DiagnosticsRow)]
        return [DiagnosticsRow(*(int(x) if t in ("int", int) else float(x)
                                 for x, t in zip(rec, types))) for rec in reader]


def _fmt(values) -> str:
    return "\n".join(repr(float(x)) for x in np.ravel(values))


def write_snapshot(state: State, path: str | Path) -> None:
    """Legacy ASCII VTK structured-points file.

    Point data: velocity ``v`` (z component 0).  Cell data: ``h``, ``A`` and
    ``scaled_speed`` = A |v|.  Values are written with ``repr`` so that the
    reader recovers them bit for bit.
    """
    mesh = state.mesh
    nxp, nyp = mesh.nx + 1, mesh.ny + 1
    v3 = np.zeros((nyp, nxp, 3))
    v3[..., :2] = state.v
    lines = [
        "# vtk DataFile Version 3.0",
        f"fastice snapshot t={state.t!r}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nxp} {nyp} 1",
        f"ORIGIN {mesh.origin[0]!r} {mesh.origin[1]!r} 0.0",
        f"SPACING {mesh.dx!r} {mesh.dy!r} 1.0",
        f"POINT_DATA {mesh.n_nodes}",
        "VECTORS v double",
        "\n".join(" ".join(repr(float(c)) for c in row) for row in v3.reshape(-1, 3)),
        f"CELL_DATA {mesh.n_cells}",
    ]
    for name, values in (("h", state.h), ("A", state.A), ("scaled_speed", scaled_speed(state))):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _fmt(values)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshot(path: str | Path) -> dict:
    """Parse a file written by :func:`write_snapshot`.

    Returns a dict with ``t``, ``dims``, ``origin``, ``spacing``, ``v``
    (ny+1, nx+1, 2) and the cell arrays (ny, nx).
    """
    tokens = Path(path).read_text().split("\n")
    header_t = tokens[1].split("t=")[-1]
    words = " ".join(tokens[2:]).split()
    out = {"t": float(header_t)}
    pos = 0

    def take(n):
        nonlocal pos
        chunk = words[pos:pos + n]
        pos += n
        return chunk

    while pos < len(words):
        key = take(1)[0]
        if key == "DIMENSIONS":
            out["dims"] = tuple(int(x) for x in take(3))
        elif key == "ORIGIN":
            out["origin"] = tuple(float(x) for x in take(3))
        elif key == "SPACING":
            out["spacing"] = tuple(float(x) for x in take(3))
        elif key == "POINT_DATA":
            n_points = int(take(1)[0])
        elif key == "CELL_DATA":
            n_cells = int(take(1)[0])
        elif key == "VECTORS":
            take(2)
            nxp, nyp, _ = out["dims"]
            v = np.array(take(3 * n_points), dtype=float).reshape(nyp, nxp, 3)
            out["v"] = v[..., :2]
        elif key == "SCALARS":
            name = take(3)[0]
            take(2)  # LOOKUP_TABLE default
            nxp, nyp, _ = out["dims"]
            out[name] = np.array(take(n_cells), dtype=float).reshape(nyp - 1, nxp - 1)
        elif key in ("ASCII", "DATASET", "STRUCTURED_POINTS"):
            continue
        else:
            raise ValueError(f"unexpected token {key!r} in {path}")
    return out
