"""
Network-level robustness measures and their batch normalization.
"""
import logging
from collections import OrderedDict
from gettext import gettext as _

import numpy as np

from gridstrain.app.util import write_csv
from gridstrain.constants import MEASURES
from gridstrain.exceptions import ParameterError
from gridstrain.models import RobustnessSummary
from gridstrain.profiles import edge_alpha

_logger = logging.getLogger(__name__)

ELEMENT_KINDS = ("node", "edge")


def aggregate(values, kind="edge"):
    """
    Mean absolute value of a per-node or per-edge quantity.
    """
    if kind not in ELEMENT_KINDS:
        raise ParameterError("kind", kind, " or ".join(ELEMENT_KINDS))
    values = np.asarray(values, dtype=float)
    if not values.size:
        raise ParameterError("values", [], _("at least one {} value").format(kind))
    return float(np.mean(np.abs(values)))


def line_load(alpha):
    """
    Per-line load ``1 / alpha``; an infinite tolerance carries no load.
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(~(alpha >= 1)):
        raise ParameterError("alpha", float(np.min(alpha)), "alpha >= 1")
    return 1.0 / alpha


def measures_for_profile(grid, profile, base_flow, embedding=None):
    """
    Raw means of every measure available for a profile.

    The tolerance measures need only the profile; the elevation, strain and tension measures are
    added when an embedding is given.

    Returns:
        OrderedDict: measure name -> raw mean, in report order.
    """
    alpha = edge_alpha(profile, base_flow)
    measures = OrderedDict()
    measures[MEASURES.MEAN_ALPHA] = aggregate(alpha, "edge")
    measures[MEASURES.MEAN_LINE_LOAD] = aggregate(line_load(alpha), "edge")
    if embedding is not None:
        measures[MEASURES.MEAN_ABS_ELEVATION] = aggregate(embedding.elevation, "node")
        measures[MEASURES.MEAN_STRAIN] = aggregate(embedding.strain, "edge")
        measures[MEASURES.MEAN_TENSION] = aggregate(embedding.tension, "edge")
    return measures


def summaries_for(network, profile_id, measures):
    return [
        RobustnessSummary(network=network, profile_id=profile_id, measure=name, raw=float(raw))
        for name, raw in measures.items()
    ]


def normalize_batch(summaries):
    """
    Min-max normalize raw means within each (network, measure) group.

    ``kappa = (m - m_min) / (m_max - m_min)``. A group whose raw means are all equal has no scale:
    every member gets kappa 0 and is flagged degenerate.

    Returns:
        list: the summaries with ``kappa`` set, in input order.
    """
    groups = {}
    for summary in summaries:
        groups.setdefault((summary.network, summary.measure), []).append(summary.raw)
    bounds = {key: (min(raws), max(raws)) for key, raws in groups.items()}
    for key, (low, high) in bounds.items():
        if high == low:
            _logger.warning(
                _("Measure %(measure)s on %(network)s is constant across the batch"),
                {"measure": key[1], "network": key[0]},
            )

    normalized = []
    for summary in summaries:
        low, high = bounds[(summary.network, summary.measure)]
        if high == low:
            normalized.append(summary.with_kappa(0.0, degenerate=True))
        else:
            kappa = (summary.raw - low) / (high - low)
            normalized.append(summary.with_kappa(min(1.0, max(0.0, kappa))))
    return normalized


def write_metrics_csv(path, summaries, manifest_id=""):
    rows = (
        {
            "network": s.network,
            "profile_id": s.profile_id,
            "measure": s.measure,
            "raw": s.raw,
            "kappa": s.kappa,
            "degenerate": s.degenerate,
        }
        for s in summaries
    )
    write_csv(
        path,
        ["network", "profile_id", "measure", "raw", "kappa", "degenerate"],
        rows,
        manifest_id=manifest_id,
    )
