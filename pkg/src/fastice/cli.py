"""Command-line entry point: ``fastice run | compare | ellipticity | presets list``."""

from __future__ import annotations

import dataclasses
import logging
import sys

import click

from . import ellipticity, scenarios
from .params import DAY, PRESETS, ConfigError, load_config, preset


def _resolve(preset_name, config_path, snapshots_every, seed, duration):
    if bool(preset_name) == bool(config_path):
        raise click.UsageError("give exactly one of --preset or --config")
    try:
        params, spec = preset(preset_name) if preset_name else load_config(config_path)
        changes = {}
        if snapshots_every is not None:
            changes["snapshot_every"] = snapshots_every * 3600.0
        if seed is not None:
            changes["seed"] = seed
        if duration is not None:
            changes["duration"] = duration * DAY
        return params, dataclasses.replace(spec, **changes)
    except ConfigError as exc:
        raise click.ClickException(str(exc)) from None


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log solver warnings and progress.")
def main(verbose):
    """Landfast sea-ice simulator."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--preset", "preset_name", type=click.Choice(PRESETS), help="Named experiment.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="YAML config file.")
@click.option("--out", "outdir", required=True, type=click.Path(file_okay=False),
              help="Output directory.")
@click.option("--snapshots-every", type=float, default=None, help="Snapshot interval in hours.")
@click.option("--seed", type=int, default=None, help="Seed recorded in the manifest.")
@click.option("--duration", type=float, default=None, help="Override the duration (days).")
@click.option("--resume", is_flag=True, help="Continue from the checkpoint in --out.")
def run(preset_name, config_path, outdir, snapshots_every, seed, duration, resume):
    """Run a scenario and write CSV, VTK snapshots and a manifest to --out."""
    params, spec = _resolve(preset_name, config_path, snapshots_every, seed, duration)

    def progress(step, n_steps, report):
        if step % 48 == 0 or step == n_steps:
            click.echo(f"step {step}/{n_steps}: {report.iterations} iterations, "
                       f"residual {report.final_residual:.2e}", err=True)

    try:
        manifest = scenarios.run(spec, params, outdir, resume=resume, progress=progress)
    except (ConfigError, scenarios.RunAborted) as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(f"{spec.name}: {manifest.status}, {manifest.steps_done} steps "
               f"in {manifest.wall_clock:.1f} s -> {outdir}")


@main.command()
@click.argument("run_a", type=click.Path(exists=True, file_okay=False))
@click.argument("run_b", type=click.Path(exists=True, file_okay=False))
def compare(run_a, run_b):
    """Compare the final states of two run directories."""
    try:
        report = scenarios.compare(run_a, run_b)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from None
    click.echo("\n".join(report.lines()))


@main.command(name="ellipticity")
@click.option("--preset", "preset_name", type=click.Choice(PRESETS), default="ex1_lfi",
              show_default=True, help="Parameter set to check.")
@click.option("--samples", type=int, default=10_000, show_default=True,
              help="Strong-ellipticity samples.")
@click.option("--normal-samples", type=int, default=100_000, show_default=True,
              help="Normal-ellipticity samples.")
@click.option("--seed", type=int, default=0, show_default=True)
def ellipticity_cmd(preset_name, samples, normal_samples, seed):
    """Sampled ellipticity and symmetry checks; exits with status 1 on a violation."""
    params, _ = preset(preset_name)
    strong, normal = ellipticity.run_suite(params, samples, normal_samples, seed)
    click.echo(strong.summary())
    click.echo(normal.summary())
    failed = False
    for rep in (strong, normal):
        if not rep.ok:
            failed = True
            click.echo(f"VIOLATION witness: {rep.witness}")
    if strong.max_symmetry_residual > 1e-13:
        failed = True
        click.echo("VIOLATION: coefficient symmetry residual above 1e-13")
    click.echo("FAIL" if failed else "OK")
    sys.exit(1 if failed else 0)


@main.group()
def presets():
    """Named experiments."""


@presets.command(name="list")
def presets_list():
    for name in PRESETS:
        _, spec = preset(name)
        click.echo(f"{name}: {spec.n_steps} steps of {spec.dt:g} s, wind={spec.wind}, "
                   f"initial={spec.initial_condition}")


if __name__ == "__main__":
    main()
