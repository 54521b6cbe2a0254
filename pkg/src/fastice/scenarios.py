"""Full runs: time loop, output directory, restart files and run comparison.

Output directory layout::

    timeseries.csv        one diagnostics row per step, plus the initial state
    snapshots/NNNN.vtk    legacy VTK snapshots every ``snapshot_every`` seconds
    checkpoint.npz        latest state, for resuming an interrupted run
    config.yaml           resolved parameters and scenario
    manifest.json         written last; status, inventory and per-step solver logs

Each step solves the momentum equation first and then transports h and A
with the new velocity.
"""

from __future__ import annotations

import json
import logging
import os
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (DiagnosticsRow, TimeseriesWriter, diagnostics_row, read_timeseries,
                          write_snapshot, write_timeseries)
from .forcing import ForcingInputs
from .grid import Mesh, State, eval_initial_condition, mesh_for, node_to_cell_average
from .momentum import MomentumProblem, SolverError, solve_momentum
from .params import ConfigError, Params, ScenarioSpec, dump_config, load_config, to_dict
from .transport import TransportProblem, advect_diffuse

log = logging.getLogger(__name__)

CHECKPOINT = "checkpoint.npz"
MANIFEST = "manifest.json"
TIMESERIES = "timeseries.csv"
CONFIG = "config.yaml"


class RunAborted(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass
class StepLog:
    step: int
    t: float
    iterations: int
    converged: bool
    initial_residual: float
    final_residual: float
    min_h: float
    min_A: float
    max_A: float
    # largest |v| on Dirichlet boundary nodes; exactly zero by construction
    max_fixed_speed: float
    clip_count: int


@dataclass
class RunManifest:
    name: str
    config: dict
    version: str
    seed: int
    status: str
    n_steps: int
    steps_done: int
    wall_clock: float
    files: list[str] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)
    failed_step: int | None = None
    platform: str = field(default_factory=platform.platform)

    def write(self, outdir: Path):
        (outdir / MANIFEST).write_text(json.dumps(asdict(self), indent=1))


def read_manifest(outdir: str | Path) -> dict:
    return json.loads((Path(outdir) / MANIFEST).read_text())


def _snapshot_stride(spec: ScenarioSpec) -> int:
    return max(1, round(spec.snapshot_every / spec.dt))


def _save_checkpoint(path: Path, state: State, step: int, prev: DiagnosticsRow, n_snap: int):
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, v=state.v, h=state.h, A=state.A, t=state.t, step=step,
             prev=np.array([prev.t, prev.ke_inst, prev.ke_cum]), n_snap=n_snap)
    os.replace(tmp, path)


def _load_checkpoint(path: Path, mesh: Mesh):
    with np.load(path) as z:
        state = State(mesh, float(z["t"]), z["v"].copy(), z["h"].copy(), z["A"].copy())
        return state, int(z["step"]), z["prev"].copy(), int(z["n_snap"])


def load_state(outdir: str | Path, spec: ScenarioSpec | None = None) -> State:
    """Latest state stored in a run directory."""
    outdir = Path(outdir)
    if spec is None:
        _, spec = load_config(outdir / CONFIG)
    state, *_ = _load_checkpoint(outdir / CHECKPOINT, mesh_for(spec))
    return state


def _fixed_speed(v: np.ndarray, mesh: Mesh) -> float:
    return float(np.abs(v[mesh.boundary_mask()]).max())


def run(spec: ScenarioSpec, params: Params, outdir: str | Path, resume: bool = False,
        stop_after: int | None = None, progress=None) -> RunManifest:
    """Run ``spec`` to completion (or for ``stop_after`` steps) and write outputs.

    With ``resume=True`` an existing checkpoint in ``outdir`` is continued;
    the result is bitwise identical to an uninterrupted run.
    """
    outdir = Path(outdir)
    (outdir / "snapshots").mkdir(parents=True, exist_ok=True)
    mesh = mesh_for(spec)
    frc = ForcingInputs.from_spec(spec)
    n_steps = spec.n_steps
    stride = _snapshot_stride(spec)
    ckpt = outdir / CHECKPOINT
    steps: list[dict] = []

    if resume and ckpt.exists():
        saved_params, saved_spec = load_config(outdir / CONFIG)
        if (saved_params, saved_spec) != (params, spec):
            raise ConfigError("resume requested with a configuration different from the saved run")
        state, step, prev_arr, n_snap = _load_checkpoint(ckpt, mesh)
        rows = read_timeseries(outdir / TIMESERIES)[: step + 1]
        prev = rows[-1]
        if (prev.t, prev.ke_inst, prev.ke_cum) != tuple(prev_arr):
            raise ConfigError("checkpoint and time series disagree")
        write_timeseries(rows, outdir / TIMESERIES)
        if (outdir / MANIFEST).exists():
            steps = read_manifest(outdir)["steps"][:step]
        writer = TimeseriesWriter(outdir / TIMESERIES, append=True)
    else:
        dump_config(params, spec, outdir / CONFIG)
        state = eval_initial_condition(spec, mesh)
        step, n_snap = 0, 0
        writer = TimeseriesWriter(outdir / TIMESERIES)
        prev = diagnostics_row(state, params, threshold=spec.polynya_threshold)
        writer.write(prev)
        write_snapshot(state, outdir / "snapshots" / f"{n_snap:04d}.vtk")
        n_snap += 1
        _save_checkpoint(ckpt, state, step, prev, n_snap)

    manifest = RunManifest(name=spec.name, config=to_dict(params, spec), version=__version__,
                           seed=spec.seed, status="running", n_steps=n_steps, steps_done=step,
                           wall_clock=0.0, steps=steps)
    t0 = time.perf_counter()
    last = n_steps if stop_after is None else min(n_steps, step + stop_after)
    try:
        while step < last:
            problem = MomentumProblem(mesh, state.v, state.h, state.A, frc, spec.dt, params)
            try:
                v, report = solve_momentum(problem, spec.solver)
            except SolverError as exc:
                raise RunAborted(f"momentum solve failed at step {step + 1}: {exc}", step + 1) from exc
            if not report.converged:
                log.warning("step %d: momentum solve not converged (residual %.3e)",
                            step + 1, report.final_residual)
            h_res = advect_diffuse(TransportProblem(mesh, state.h, v, params.d_h, spec.dt, "h"))
            A_res = advect_diffuse(TransportProblem(mesh, state.A, v, params.d_A, spec.dt, "A"))
            step += 1
            state = State(mesh, step * spec.dt, v, h_res.field, A_res.field)
            clips = h_res.clipped + A_res.clipped
            prev = diagnostics_row(state, params, prev, clips, spec.polynya_threshold)
            writer.write(prev)
            manifest.steps.append(asdict(StepLog(
                step=step, t=state.t, iterations=report.iterations, converged=report.converged,
                initial_residual=report.initial_residual, final_residual=report.final_residual,
                min_h=float(state.h.min()), min_A=float(state.A.min()), max_A=float(state.A.max()),
                max_fixed_speed=_fixed_speed(v, mesh), clip_count=clips)))
            if step % stride == 0:
                write_snapshot(state, outdir / "snapshots" / f"{n_snap:04d}.vtk")
                n_snap += 1
            _save_checkpoint(ckpt, state, step, prev, n_snap)
            if progress is not None:
                progress(step, n_steps, report)
        manifest.status = "complete" if step == n_steps else "stopped"
    except RunAborted as exc:
        manifest.status = "failed"
        manifest.failed_step = exc.step
        raise
    finally:
        writer.close()
        manifest.steps_done = step
        manifest.wall_clock = time.perf_counter() - t0
        manifest.files = sorted(str(p.relative_to(outdir)) for p in outdir.rglob("*")
                                if p.is_file() and p.name != MANIFEST)
        manifest.write(outdir)
    return manifest


@dataclass
class RunMetrics:
    t: float
    left_strip_cells: int
    left_strip_mean_speed: float
    interior_mean_eastward: float
    min_A_left_half: float
    left_boundary_mean_A: float
    max_speed: float


def run_metrics(state: State, params: Params, strip_width: float = 64e3) -> RunMetrics:
    """Summary metrics for landfast versus pack-ice comparisons.

    The left strip is the set of cells with x < ``strip_width`` and
    h > h_crit; its mean speed is NaN when the set is empty.
    """
    mesh = state.mesh
    x, _ = mesh.cell_coords()
    x = x - mesh.origin[0]
    vc = node_to_cell_average(state.v, mesh)
    speed = np.hypot(vc[..., 0], vc[..., 1])
    strip = (x < strip_width) & (state.h > params.h_crit)
    return RunMetrics(
        t=state.t,
        left_strip_cells=int(strip.sum()),
        left_strip_mean_speed=float(speed[strip].mean()) if strip.any() else float("nan"),
        interior_mean_eastward=float(state.v[1:-1, 1:-1, 0].mean()),
        min_A_left_half=float(state.A[x < 0.5 * mesh.lengths[0]].min()),
        left_boundary_mean_A=float(state.A[:, 0].mean()),
        max_speed=float(np.hypot(state.v[..., 0], state.v[..., 1]).max()),
    )


@dataclass
class CompareReport:
    max_abs_dv: float
    max_abs_dh: float
    max_abs_dA: float
    a: RunMetrics
    b: RunMetrics

    def lines(self) -> list[str]:
        out = [f"max |dv| = {self.max_abs_dv:.6e} m/s",
               f"max |dh| = {self.max_abs_dh:.6e} m",
               f"max |dA| = {self.max_abs_dA:.6e}"]
        for label, m in (("A", self.a), ("B", self.b)):
            out.append(f"run {label}: t={m.t:g} s left_strip_cells={m.left_strip_cells} "
                       f"left_strip_mean_speed={m.left_strip_mean_speed:.6e} "
                       f"interior_mean_eastward={m.interior_mean_eastward:.6e} "
                       f"min_A_left_half={m.min_A_left_half:.4f} "
                       f"left_boundary_mean_A={m.left_boundary_mean_A:.4f}")
        return out


def compare(dir_a: str | Path, dir_b: str | Path) -> CompareReport:
    """Field differences and summary metrics between the final states of two runs."""
    params_a, spec_a = load_config(Path(dir_a) / CONFIG)
    params_b, spec_b = load_config(Path(dir_b) / CONFIG)
    mesh_a, mesh_b = mesh_for(spec_a), mesh_for(spec_b)
    if mesh_a != mesh_b:
        raise ValueError(f"incompatible meshes: {mesh_a} vs {mesh_b}")
    a, b = load_state(dir_a, spec_a), load_state(dir_b, spec_b)
    return CompareReport(
        max_abs_dv=float(np.abs(a.v - b.v).max()), max_abs_dh=float(np.abs(a.h - b.h).max()),
        max_abs_dA=float(np.abs(a.A - b.A).max()),
        a=run_metrics(a, params_a), b=run_metrics(b, params_b))
