"""
Time-series batches: one grid state per period, scored against attacks on its real line limits.

Batch format: CSV with columns ``period, bus_id, generation, demand``. Periods are integers and
must appear in strictly increasing order; a blank generation or demand keeps the grid's value.
"""
import csv
import logging
import math
from dataclasses import dataclass
from gettext import gettext as _
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from gridstrain.app.progress import ProgressReport
from gridstrain.app.settings import settings
from gridstrain.app.util import write_csv, write_json
from gridstrain.attack import run_campaign
from gridstrain.exceptions import DegenerateDataError, TimeSeriesError
from gridstrain.evaluation import pearson
from gridstrain.grid import with_capacities, with_injections
from gridstrain.metrics import aggregate, line_load
from gridstrain.powerflow import solve_grid_flow
from gridstrain.profiles import edge_alpha, proportional_profile, real_capacity_profile
from gridstrain.setse import SolverConfig, embed_grid
from gridstrain.tasking.pool import WorkerPool, shared

_logger = logging.getLogger(__name__)

BATCH_COLUMNS = ("period", "bus_id", "generation", "demand")

#: Period measures correlated with the mean collapse round.
SERIES_MEASURES = ("mean_line_load", "mean_tension")

PERIOD_COLUMNS = [
    "period",
    "feasible",
    "reason",
    "mean_line_load",
    "mean_alpha",
    "mean_tension",
    "mean_collapse_round",
    "mean_power_lost",
]


@dataclass(frozen=True)
class TimeSeriesBatch:
    """
    Ordered periods, each a mapping of bus id to (generation, demand) overrides.
    """

    periods: Tuple[Tuple[int, Dict[str, Tuple[float, float]]], ...]

    def __len__(self):
        return len(self.periods)


def _value(raw, row_number, column):
    if raw is None or raw.strip() == "":
        return None
    try:
        value = float(raw)
    except ValueError:
        raise TimeSeriesError(_("{} is not a number").format(column), row_number)
    if not math.isfinite(value) or value < 0:
        raise TimeSeriesError(_("{} must be finite and >= 0").format(column), row_number)
    return value


def load_batch(path, grid):
    """
    Read a batch CSV against a grid.

    Raises:
        TimeSeriesError: unreadable file, short or long rows, unknown buses, bad numbers, or
            periods out of order.
    """
    try:
        with open(Path(path), newline="", encoding="utf8") as handle:
            return _read_batch(csv.DictReader(handle), grid)
    except UnicodeDecodeError as exc:
        raise TimeSeriesError(_("not UTF-8 text ({})").format(exc.reason))
    except csv.Error as exc:
        raise TimeSeriesError(str(exc))
    except OSError as exc:
        raise TimeSeriesError(exc.strerror or str(exc))


def _read_batch(reader, grid):
    periods = []
    missing = set(BATCH_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise TimeSeriesError(_("missing columns {}").format(sorted(missing)))
    for row_number, row in enumerate(reader, start=2):
        if None in row or any(row[column] is None for column in BATCH_COLUMNS):
            raise TimeSeriesError(_("expected {} cells").format(len(reader.fieldnames)), row_number)
        try:
            period = int(row["period"])
        except (TypeError, ValueError):
            raise TimeSeriesError(_("period must be an integer"), row_number)
        bus_id = row["bus_id"].strip()
        if bus_id not in grid.bus_index:
            raise TimeSeriesError(_("unknown bus '{}'").format(bus_id), row_number)
        if not periods or periods[-1][0] != period:
            if periods and period <= periods[-1][0]:
                raise TimeSeriesError(_("periods must be strictly increasing"), row_number)
            periods.append((period, {}))
        bus = grid.buses[grid.bus_index[bus_id]]
        generation = _value(row["generation"], row_number, "generation")
        demand = _value(row["demand"], row_number, "demand")
        periods[-1][1][bus_id] = (
            bus.generation if generation is None else generation,
            bus.demand if demand is None else demand,
        )
    return TimeSeriesBatch(periods=tuple(periods))


def rate_grid(grid, alpha):
    """
    Give every line the limit ``alpha * |f|`` of the intact base flow, for grids read without
    line limits.

    Raises:
        ParameterError: alpha < 1.
    """
    base_flow = solve_grid_flow(grid)
    return with_capacities(grid, proportional_profile(grid, base_flow, alpha).capacities)


def _infeasible(period, reason):
    _logger.warning(
        _("Period %(period)s skipped: %(reason)s"), {"period": period, "reason": reason}
    )
    return {"period": period, "feasible": False, "reason": reason}


def score_period(grid, period, overrides, n_runs, master_seed, config=None):
    """
    Measures and attack campaign of one period on the grid's real line limits.

    A period is infeasible (recorded and skipped) when it has no generation or no demand, or when
    its own base flow already exceeds a line limit.
    """
    state = with_injections(grid, overrides)
    if state.generation.sum() <= 0 or state.demand.sum() <= 0:
        return _infeasible(period, "no_generation_or_demand")
    base_flow = solve_grid_flow(state)
    profile = real_capacity_profile(state, profile_id="period-{}".format(period))
    overloaded = np.abs(base_flow.flows) > profile.array * (1.0 + settings.OVERLOAD_RTOL)
    if np.any(overloaded):
        return _infeasible(period, "base_flow_over_limit")
    alpha = edge_alpha(profile, base_flow)
    embedding = embed_grid(state, profile, base_flow, config=config)
    campaign = run_campaign(state, profile, n_runs=n_runs, master_seed=master_seed)
    return {
        "period": period,
        "feasible": True,
        "reason": "",
        "mean_line_load": aggregate(line_load(alpha)),
        "mean_alpha": aggregate(alpha),
        "mean_tension": aggregate(embedding.tension),
        "mean_collapse_round": campaign.mean_collapse_round,
        "mean_power_lost": campaign.mean_power_lost,
    }


def correlations(records):
    """
    Pearson correlation of each period measure with the mean collapse round over feasible
    periods; undefined correlations are ``None`` and flagged.
    """
    feasible = [r for r in records if r["feasible"]]
    rounds = [r["mean_collapse_round"] for r in feasible]
    result = {}
    for measure in SERIES_MEASURES:
        try:
            result[measure] = {
                "r": pearson([r[measure] for r in feasible], rounds),
                "undefined": False,
            }
        except DegenerateDataError as exc:
            result[measure] = {"r": None, "undefined": True, "reason": str(exc)}
    return result


def score_period_unit(index):
    """Score period ``index`` of the batch installed in this process."""
    inputs = shared()
    period, overrides = inputs["periods"][index]
    return score_period(
        inputs["grid"], period, overrides, inputs["n_runs"], inputs["master_seed"], inputs["config"]
    )


def run_timeseries(
    grid, batch, n_runs=None, master_seed=None, out_dir=None, manifest_id="", workers=None
):
    """
    Score every period of a batch and correlate the measures with robustness.

    Periods are independent and are scored on ``workers`` processes (``settings.WORKERS`` by
    default); the records do not depend on the worker count.

    Raises:
        TimeSeriesError: the grid has no real line limits.

    Returns:
        dict: ``periods`` (one record per period) and ``correlations``.
    """
    if not grid.has_capacities:
        raise TimeSeriesError(_("time series need real line limits on every line"))
    n_runs = settings.N_RUNS if n_runs is None else n_runs
    master_seed = settings.MASTER_SEED if master_seed is None else master_seed
    workers = settings.WORKERS if workers is None else workers
    payload = {
        "grid": grid,
        "periods": batch.periods,
        "n_runs": n_runs,
        "master_seed": master_seed,
        "config": SolverConfig.from_settings(),
    }
    with WorkerPool(workers, payload) as pool, ProgressReport(
        message=_("Scoring periods of {}").format(grid.name), code="timeseries", total=len(batch)
    ) as progress:
        records = list(progress.iter(pool.imap(score_period_unit, range(len(batch)))))
    summary = {
        "network": grid.name,
        "periods": records,
        "correlations": correlations(records),
        "skipped_periods": [r["period"] for r in records if not r["feasible"]],
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_csv(out_dir / "timeseries.csv", PERIOD_COLUMNS, records, manifest_id)
        write_json(
            out_dir / "timeseries.json",
            {k: v for k, v in summary.items() if k != "periods"},
            manifest_id=manifest_id,
        )
    return summary
