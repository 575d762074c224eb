"""
Evaluation report of an experiment directory.
"""
import csv
import logging
from gettext import gettext as _
from pathlib import Path

import numpy as np

from gridstrain.app.settings import settings
from gridstrain.app.util import read_json, read_jsonl, write_csv, write_json
from gridstrain.constants import MEASURE_CHOICES
from gridstrain.evaluation import (
    RegressionDataset,
    evaluate,
    fit_spline,
    proportional_only,
)
from gridstrain.exceptions import DegenerateDataError, ManifestError, ParameterError

_logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "network",
    "measure",
    "status",
    "n",
    "mean_r2",
    "mean_smape",
    "folds",
    "repeats",
    "undefined_r2",
    "smape_zero_terms",
]


def _read_metrics(path):
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


def load_datasets(out_dir, use_raw=False):
    """
    Pair every (network, measure) with the mean collapse rounds of the same profiles.

    Args:
        use_raw (bool): regress on raw means instead of the batch-normalized kappa.

    Raises:
        ManifestError: the campaign or metric artifacts are missing.
    """
    out_dir = Path(out_dir)
    for name in ("campaigns.jsonl", "metrics.csv"):
        if not (out_dir / name).exists():
            raise ManifestError(_("missing artifact {}").format(name), str(out_dir))
    rounds = {
        (c["network"], c["profile_id"]): c["mean_collapse_round"]
        for c in read_jsonl(out_dir / "campaigns.jsonl")
    }
    pairs = {}
    for row in _read_metrics(out_dir / "metrics.csv"):
        key = (row["network"], row["profile_id"])
        if key not in rounds:
            continue
        value = row["raw"] if use_raw else row["kappa"]
        if value == "":
            continue
        pairs.setdefault((row["network"], row["measure"]), []).append(
            (row["profile_id"], float(value), rounds[key])
        )
    datasets = []
    for (network, measure), rows in sorted(
        pairs.items(), key=lambda item: (item[0][0], MEASURE_CHOICES.index(item[0][1]))
    ):
        datasets.append(
            RegressionDataset(
                network=network,
                measure=measure,
                x=np.array([r[1] for r in rows]),
                y=np.array([r[2] for r in rows]),
                profile_ids=tuple(r[0] for r in rows),
            )
        )
    return datasets


def _plot_rows(dataset):
    try:
        model = fit_spline(dataset.x, dataset.y)
        predictions = model(dataset.x)
    except (ParameterError, DegenerateDataError):
        predictions = np.full(len(dataset), np.nan)
    order = np.lexsort((np.array(dataset.profile_ids), dataset.x))
    for i in order:
        yield {
            "network": dataset.network,
            "profile_id": dataset.profile_ids[i],
            "x": float(dataset.x[i]),
            "y": float(dataset.y[i]),
            "prediction": float(predictions[i]),
        }


def build_report(out_dir, proportional=False, use_raw=False, repeats=None, folds=None, seed=None):
    """
    Cross-validate every (network, measure) dataset of an experiment and write ``report/``:
    ``evaluation.json``, ``evaluation.csv`` and one ``plot_<measure>.csv`` per measure with
    x, y and the full-data spline prediction.

    Pairs that cannot be scored (too few points, constant data) are listed with their reason.

    Args:
        proportional (bool): train on the proportionally loaded profiles only.
        use_raw (bool): regress on raw means instead of kappa.
    """
    out_dir = Path(out_dir)
    manifest_id = ""
    manifest_path = out_dir / "manifest.json"
    if manifest_path.exists():
        manifest_id = read_json(manifest_path).get("manifest_id", "")
    seed = settings.MASTER_SEED if seed is None else seed
    datasets = load_datasets(out_dir, use_raw=use_raw)
    if proportional:
        datasets = [proportional_only(d) for d in datasets]
    report = evaluate(datasets, repeats, folds, seed)
    report.proportional_only = proportional

    report_dir = out_dir / "report"
    document = report.as_dict()
    document["x"] = "raw" if use_raw else "kappa"
    write_json(report_dir / "evaluation.json", document, manifest_id=manifest_id)

    rows = []
    for dataset in datasets:
        key = (dataset.network, dataset.measure)
        row = {"network": dataset.network, "measure": dataset.measure, "n": len(dataset)}
        if key in report.entries:
            entry = report.entries[key]
            row.update(
                status="ok",
                mean_r2=entry.mean_r2,
                mean_smape=entry.mean_smape,
                folds=entry.folds,
                repeats=entry.repeats,
                undefined_r2=entry.undefined_r2,
                smape_zero_terms=entry.smape_zero_terms,
            )
        else:
            row["status"] = report.skipped.get(key, "not_scored")
        rows.append(row)
    write_csv(report_dir / "evaluation.csv", REPORT_COLUMNS, rows, manifest_id)

    for measure in MEASURE_CHOICES:
        plot_rows = []
        for dataset in datasets:
            if dataset.measure == measure:
                plot_rows.extend(_plot_rows(dataset))
        if plot_rows:
            write_csv(
                report_dir / "plot_{}.csv".format(measure),
                ["network", "profile_id", "x", "y", "prediction"],
                plot_rows,
                manifest_id,
            )
    _logger.info(
        _("Report on %(count)d datasets written to %(path)s"),
        {"count": len(datasets), "path": report_dir},
    )
    return report
