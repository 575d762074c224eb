"""
The ``gridstrain`` command line.
"""
import logging
import sys
from dataclasses import replace
from gettext import gettext as _
from pathlib import Path

import click

from gridstrain.app.loggers import configure_logging, experiment_context
from gridstrain.app.settings import load_config_file, settings
from gridstrain.app.util import read_json, write_json, write_jsonl
from gridstrain.constants import GRID_FORMATS
from gridstrain.exceptions import GridStrainException
from gridstrain.geospatial import krige_edges, krige_nodes, write_esri_ascii, write_raster_csv
from gridstrain.grid import dump_grid, summary_statistics
from gridstrain.models import RasterSpec
from gridstrain.powerflow import solve_grid_flow
from gridstrain.profiles import generate_profile_grid
from gridstrain.setse import stiffness_sensitivity
from gridstrain.tasking.experiment import (
    GridSource,
    load_manifest,
    manifest_from_settings,
    rebuild_metrics,
    run_experiment,
    write_base_flow,
)
from gridstrain.tasking.report import build_report
from gridstrain.tasking.timeseries import load_batch, rate_grid, run_timeseries

_logger = logging.getLogger(__name__)

FORMAT_OPTION = click.option(
    "--format",
    "grid_format",
    type=click.Choice([GRID_FORMATS.CANONICAL_JSON, GRID_FORMATS.NODE_EDGE_CSV]),
    default=GRID_FORMATS.CANONICAL_JSON,
    show_default=True,
    help=_("Grid file format."),
)


def _out(ctx):
    path = Path(ctx.obj["out"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fail(exc):
    _logger.error(str(exc))
    raise click.exceptions.Exit(2)


def _grid(path, grid_format):
    try:
        return GridSource(str(path), grid_format).load()
    except GridStrainException as exc:
        _fail(exc)


def _finish(outcome):
    if not outcome.ok:
        _logger.error(_("%d profiles failed, see errors.jsonl"), len(outcome.errors))
        raise click.exceptions.Exit(1)


@click.group()
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    help=_("Settings file (TOML, YAML, INI or JSON) layered over the defaults."),
)
@click.option("--seed", type=int, help=_("Master seed of the attack campaigns."))
@click.option("--workers", type=click.IntRange(min=1), help=_("Worker processes."))
@click.option(
    "--out", type=click.Path(file_okay=False), default=".", help=_("Output directory.")
)
@click.option("-v", "--verbose", is_flag=True, help=_("Log at DEBUG level."))
@click.pass_context
def manage(ctx, config, seed, workers, out, verbose):
    """Power-grid robustness experiments: line limits, cascades and spring embeddings."""
    try:
        if config:
            load_config_file(settings, config)
        if seed is not None:
            settings.set("MASTER_SEED", seed)
        if workers is not None:
            settings.set("WORKERS", workers)
        settings.validators.validate()
    except Exception as exc:
        raise click.UsageError(str(exc))
    configure_logging(settings, level="DEBUG" if verbose else None)
    ctx.ensure_object(dict)
    ctx.obj["out"] = out


@manage.command()
@click.argument("grid_path", type=click.Path(exists=True))
@FORMAT_OPTION
@click.option(
    "--dump-format",
    type=click.Choice([GRID_FORMATS.CANONICAL_JSON, GRID_FORMATS.NODE_EDGE_CSV]),
    default=GRID_FORMATS.CANONICAL_JSON,
    help=_("Format of the validated copy written to the output directory."),
)
@click.pass_context
def ingest(ctx, grid_path, grid_format, dump_format):
    """Validate a grid, write its canonical copy, summary statistics and base flow."""
    grid = _grid(grid_path, grid_format)
    out = _out(ctx)
    target = out / ("grid.json" if dump_format == GRID_FORMATS.CANONICAL_JSON else "grid")
    dump_grid(grid, target, dump_format)
    write_json(out / "grid_summary.json", summary_statistics(grid).as_dict(), manifest_id="")
    solution = write_base_flow(out, grid)
    worst = max(solution.residuals) if solution.residuals else 0.0
    click.echo(
        _("{name}: {buses} buses, {lines} lines, {islands} islands, max residual {res:.3g}").format(
            name=grid.name,
            buses=grid.n_buses,
            lines=grid.n_lines,
            islands=len(solution.islands),
            res=worst,
        )
    )


@manage.command()
@click.argument("grid_path", type=click.Path(exists=True))
@FORMAT_OPTION
@click.pass_context
def profiles(ctx, grid_path, grid_format):
    """Generate the line-limit profile grid of the configured parameter sets."""
    grid = _grid(grid_path, grid_format)
    out = _out(ctx)
    base_flow = solve_grid_flow(grid)
    try:
        generated, skipped = generate_profile_grid(
            grid,
            base_flow,
            settings.ALPHA_SET,
            settings.P_SET,
            settings.F_SET,
            settings.Q_SET,
            include_proportional=settings.INCLUDE_PROPORTIONAL,
        )
    except GridStrainException as exc:
        _fail(exc)
    write_jsonl(out / "profiles.jsonl", (p.as_record(grid) for p in generated), manifest_id="")
    write_jsonl(out / "skipped_profiles.jsonl", skipped, manifest_id="")
    click.echo(
        _("{count} profiles, {skipped} skipped").format(count=len(generated), skipped=len(skipped))
    )


def _run_stages(ctx, grid_path, grid_format, stages, n_runs=None):
    manifest = manifest_from_settings(grid_path, grid_format)
    if n_runs is not None:
        manifest = replace(manifest, n_runs=n_runs)
    try:
        outcome = run_experiment(manifest, _out(ctx), stages=stages)
    except GridStrainException as exc:
        _fail(exc)
    return outcome


@manage.command()
@click.argument("grid_path", type=click.Path(exists=True))
@FORMAT_OPTION
@click.option("--n-runs", type=click.IntRange(min=1), help=_("Attack runs per profile."))
@click.pass_context
def attack(ctx, grid_path, grid_format, n_runs):
    """Run the attack campaigns of every profile."""
    _finish(_run_stages(ctx, grid_path, grid_format, ("attack",), n_runs))


@manage.command()
@click.argument("grid_path", type=click.Path(exists=True))
@FORMAT_OPTION
@click.option(
    "--compare-k",
    nargs=2,
    type=float,
    metavar="K_MIN K_RANGE",
    help=_("Also rank-correlate mean tension against a second stiffness parametrization."),
)
@click.pass_context
def embed(ctx, grid_path, grid_format, compare_k):
    """Embed every profile and record its elevation, strain and tension measures."""
    outcome = _run_stages(ctx, grid_path, grid_format, ("embed",))
    if compare_k:
        grid = _grid(grid_path, grid_format)
        base_flow = solve_grid_flow(grid)
        generated, _skipped = generate_profile_grid(
            grid,
            base_flow,
            settings.ALPHA_SET,
            settings.P_SET,
            settings.F_SET,
            settings.Q_SET,
            include_proportional=settings.INCLUDE_PROPORTIONAL,
        )
        with experiment_context(outcome.manifest_id):
            result = stiffness_sensitivity(
                grid,
                generated,
                base_flow,
                (settings.K_MIN, settings.K_RANGE),
                tuple(compare_k),
            )
        write_json(
            _out(ctx) / "stiffness_sensitivity.json", result, manifest_id=outcome.manifest_id
        )
        click.echo(_("Spearman rho of mean tension: {:.4f}").format(result["rho"]))
    _finish(outcome)


@manage.command()
@click.argument("experiment_dir", type=click.Path(exists=True, file_okay=False))
def metrics(experiment_dir):
    """Recompute the batch-normalized metrics of an experiment directory."""
    try:
        summaries = rebuild_metrics(experiment_dir)
    except GridStrainException as exc:
        _fail(exc)
    click.echo(_("{} measure values normalized").format(len(summaries)))


@manage.command()
@click.argument("experiment_dir", type=click.Path(exists=True, file_okay=False))
@click.option(
    "--proportional-only", is_flag=True, help=_("Train on proportionally loaded profiles only.")
)
@click.option("--raw", is_flag=True, help=_("Regress on raw means instead of kappa."))
@click.option("--repeats", type=click.IntRange(min=1), help=_("Cross-validation repeats."))
@click.option("--folds", type=click.IntRange(min=2), help=_("Cross-validation folds."))
def report(experiment_dir, proportional_only, raw, repeats, folds):
    """Cross-validate every measure against the mean collapse round."""
    try:
        result = build_report(
            experiment_dir,
            proportional=proportional_only,
            use_raw=raw,
            repeats=repeats,
            folds=folds,
        )
    except GridStrainException as exc:
        _fail(exc)
    for (network, measure), entry in sorted(result.entries.items()):
        click.echo(
            "{network}\t{measure}\tR2={r2:.4f}\tSMAPE={smape:.2f}".format(
                network=network, measure=measure, r2=entry.mean_r2, smape=entry.mean_smape
            )
        )
    for (network, measure), reason in sorted(result.skipped.items()):
        click.echo("{}\t{}\tnot scored: {}".format(network, measure, reason))


@manage.command()
@click.argument("grid_path", type=click.Path(exists=True))
@click.argument("batch_path", type=click.Path(exists=True, dir_okay=False))
@FORMAT_OPTION
@click.option("--n-runs", type=click.IntRange(min=1), help=_("Attack runs per period."))
@click.option(
    "--alpha",
    type=click.FloatRange(min=1.0),
    help=_("Rate every line at alpha times its base flow instead of reading its limit."),
)
@click.pass_context
def timeseries(ctx, grid_path, batch_path, grid_format, n_runs, alpha):
    """Score every period of a generation/demand batch on the grid's line limits."""
    grid = _grid(grid_path, grid_format)
    try:
        if alpha is not None:
            grid = rate_grid(grid, alpha)
        batch = load_batch(batch_path, grid)
        summary = run_timeseries(
            grid, batch, n_runs=n_runs, out_dir=_out(ctx), workers=settings.WORKERS
        )
    except GridStrainException as exc:
        _fail(exc)
    for measure, value in summary["correlations"].items():
        if value["undefined"]:
            click.echo(_("{}: correlation undefined").format(measure))
        else:
            click.echo("{}: r={:.4f}".format(measure, value["r"]))
    if summary["skipped_periods"]:
        _logger.warning(
            _("%d infeasible periods skipped"), len(summary["skipped_periods"])
        )


@manage.command()
@click.argument("grid_path", type=click.Path(exists=True))
@click.argument("embedding_path", type=click.Path(exists=True, dir_okay=False))
@FORMAT_OPTION
@click.option(
    "--quantity",
    type=click.Choice(["elevation", "strain", "tension"]),
    default="elevation",
    show_default=True,
)
@click.option("--cells", type=click.IntRange(min=1), default=100, show_default=True)
@click.pass_context
def krige(ctx, grid_path, embedding_path, grid_format, quantity, cells):
    """Interpolate an embedding quantity over the grid's geography."""
    grid = _grid(grid_path, grid_format)
    document = read_json(embedding_path)
    try:
        if quantity == "elevation":
            by_id = {node["id"]: node["elevation"] for node in document["nodes"]}
            values = [by_id[bus_id] for bus_id in grid.bus_ids]
            spec = RasterSpec.covering(grid.coordinates, cells=cells)
            raster = krige_nodes(grid, values, spec=spec)
        else:
            by_id = {edge["id"]: edge[quantity] for edge in document["edges"]}
            values = [by_id[line_id] for line_id in grid.line_ids]
            spec = RasterSpec.covering(grid.coordinates, cells=cells)
            raster = krige_edges(grid, values, spec=spec)
    except KeyError as exc:
        _fail(_("embedding does not cover {}").format(exc))
    except GridStrainException as exc:
        _fail(exc)
    out = _out(ctx)
    manifest_id = document.get("manifest_id", "")
    write_raster_csv(out / "raster_{}.csv".format(quantity), raster, manifest_id)
    write_esri_ascii(out / "raster_{}.asc".format(quantity), raster)
    write_json(out / "raster_{}.json".format(quantity), raster.metadata, manifest_id=manifest_id)


@manage.command()
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--skip-report", is_flag=True, help=_("Stop after the metrics."))
@click.pass_context
def run(ctx, manifest_path, skip_report):
    """Run (or resume) a full experiment from a YAML manifest."""
    try:
        manifest = load_manifest(manifest_path)
        outcome = run_experiment(manifest, _out(ctx))
        if not skip_report:
            with experiment_context(outcome.manifest_id):
                build_report(outcome.out_dir)
    except GridStrainException as exc:
        _fail(exc)
    _finish(outcome)


if __name__ == "__main__":
    manage(sys.argv[1:])
