"""
How well does a robustness measure predict the mean collapse round?

Each (network, measure) pair is scored by fitting a univariate penalized cubic spline (standing in
for a one-term generalized additive model) under repeated k-fold cross-validation, reporting R^2
and SMAPE on the held-out folds. Time-series comparisons use Pearson correlation.
"""
import logging
import math
from dataclasses import dataclass, field
from gettext import gettext as _
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.interpolate import BSpline
from scipy.stats import pearsonr

from gridstrain.app.progress import ProgressReport
from gridstrain.app.settings import settings
from gridstrain.exceptions import DegenerateDataError, ParameterError

_logger = logging.getLogger(__name__)

SPLINE_DEGREE = 3

#: Recorded in every report so readers know which regressor produced the scores.
REGRESSOR = "penalized_cubic_spline_gcv"

#: Fold scores are computed on held-out data, never on refit residuals.
SCORING = "held_out"


@dataclass(frozen=True, eq=False)
class PenalizedSpline:
    """
    A fitted univariate smoother. Outside the training range it continues linearly from the
    boundary value and slope.

    Attributes:
        lam (float): the smoothing parameter picked by GCV (0 for the constant fallback).
        edf (float): effective degrees of freedom at ``lam``.
        constant (bool): True when the inputs had no spread and the fit is the mean of y.
    """

    spline: Optional[BSpline]
    lower: float
    upper: float
    lam: float
    edf: float
    mean: float
    constant: bool = False

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.constant:
            return np.full(x.shape, self.mean)
        clipped = np.clip(x, self.lower, self.upper)
        values = self.spline(clipped)
        slope = self.spline.derivative()(clipped)
        return values + slope * (x - clipped)

    def as_dict(self):
        return {
            "regressor": REGRESSOR,
            "lambda": self.lam,
            "edf": self.edf,
            "constant": self.constant,
            "n_basis": 0 if self.spline is None else len(self.spline.c),
        }


def spline_knots(x, count=None):
    """
    Clamped cubic knot vector with the distinct quantiles of ``x`` as breakpoints.
    """
    count = settings.SPLINE_KNOTS if count is None else count
    breaks = np.unique(np.quantile(x, np.linspace(0.0, 1.0, count)))
    return np.concatenate(
        [np.repeat(breaks[0], SPLINE_DEGREE), breaks, np.repeat(breaks[-1], SPLINE_DEGREE)]
    )


def basis_matrix(knots, x):
    n_basis = len(knots) - SPLINE_DEGREE - 1
    return BSpline(knots, np.eye(n_basis), SPLINE_DEGREE)(x)


def difference_penalty(knots):
    """
    ``D^T D`` where ``D`` takes second divided differences of the coefficients over the Greville
    abscissae. Coefficients of a straight line lie on that line at the abscissae, so linear fits
    are never penalized.
    """
    n_basis = len(knots) - SPLINE_DEGREE - 1
    greville = np.array(
        [knots[j + 1 : j + SPLINE_DEGREE + 1].mean() for j in range(n_basis)]  # noqa: E203
    )
    first = np.zeros((n_basis - 1, n_basis))
    for j in range(n_basis - 1):
        step = greville[j + 1] - greville[j]
        first[j, j], first[j, j + 1] = -1.0 / step, 1.0 / step
    second = np.zeros((n_basis - 2, n_basis))
    for j in range(n_basis - 2):
        width = (greville[j + 2] - greville[j]) / 2.0
        second[j] = (first[j + 1] - first[j]) / width
    return second.T @ second


def lambda_grid(gram, penalty):
    """
    Log-spaced smoothing values, scaled so the penalty and the data term are comparable.
    """
    exponents = np.linspace(
        settings.SPLINE_LAMBDA_MIN_EXP, settings.SPLINE_LAMBDA_MAX_EXP, settings.SPLINE_LAMBDA_COUNT
    )
    scale = np.trace(gram) / np.trace(penalty) if np.trace(penalty) > 0 else 1.0
    return scale * np.power(10.0, exponents)


def fit_spline(x, y, knots=None, lambdas=None):
    """
    Fit a penalized cubic spline, choosing the smoothing parameter by generalized
    cross-validation ``n * RSS / (n - edf)^2``.

    Args:
        x (numpy.ndarray): predictor values.
        y (numpy.ndarray): responses.
        knots (int): number of quantile breakpoints, defaults to the setting.
        lambdas (numpy.ndarray): explicit smoothing grid, defaults to :func:`lambda_grid`.

    Returns:
        PenalizedSpline: the fitted predictor.

    Raises:
        ParameterError: fewer training points than the configured minimum.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < settings.SPLINE_MIN_POINTS:
        raise ParameterError(
            "n", n, _("at least {} training points").format(settings.SPLINE_MIN_POINTS)
        )
    mean = float(np.mean(y))
    if np.ptp(x) == 0:
        _logger.warning(_("All predictor values are equal; fitting the mean"))
        return PenalizedSpline(None, x[0], x[0], 0.0, 1.0, mean, constant=True)

    t = spline_knots(x, knots)
    basis = basis_matrix(t, x)
    gram = basis.T @ basis
    rhs = basis.T @ y
    penalty = difference_penalty(t)
    lambdas = lambda_grid(gram, penalty) if lambdas is None else lambdas

    best = None
    for lam in lambdas:
        system = gram + lam * penalty
        try:
            coef = scipy.linalg.solve(system, rhs, assume_a="sym")
            edf = float(np.trace(scipy.linalg.solve(system, gram, assume_a="sym")))
        except (np.linalg.LinAlgError, ValueError):
            continue
        if not edf < n:
            continue
        rss = float(np.sum((y - basis @ coef) ** 2))
        score = n * rss / (n - edf) ** 2
        if best is None or score < best[0]:
            best = (score, lam, edf, coef)
    if best is None:
        raise DegenerateDataError(_("no smoothing value gave a solvable spline system"))
    _score, lam, edf, coef = best
    return PenalizedSpline(
        spline=BSpline(t, coef, SPLINE_DEGREE),
        lower=float(t[0]),
        upper=float(t[-1]),
        lam=float(lam),
        edf=edf,
        mean=mean,
    )


def r_squared(truth, predictions):
    """
    ``1 - SS_res / SS_tot``.

    Raises:
        DegenerateDataError: fewer than two points, or a constant truth vector.
    """
    truth = np.asarray(truth, dtype=float)
    predictions = np.asarray(predictions, dtype=float)
    if len(truth) < 2:
        raise DegenerateDataError(_("R^2 needs at least two points"))
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0:
        raise DegenerateDataError(_("R^2 is undefined for a constant truth vector"))
    return 1.0 - float(np.sum((truth - predictions) ** 2)) / ss_tot


def smape_terms(truth, predictions):
    """
    Per-point SMAPE terms (percent) and the mask of points where truth and prediction are both
    zero; those terms are 0.
    """
    truth = np.asarray(truth, dtype=float)
    predictions = np.asarray(predictions, dtype=float)
    difference = np.abs(predictions - truth)
    denominator = (np.abs(truth) + np.abs(predictions)) / 2.0
    undefined = denominator == 0
    terms = np.zeros(len(truth))
    terms[~undefined] = difference[~undefined] / denominator[~undefined]
    return 100.0 * terms, undefined


def smape(truth, predictions):
    """
    Symmetric mean absolute percentage error, ``100/n * sum(|p - r| / ((|r| + |p|) / 2))``.
    Bounded by [0, 200].
    """
    terms, undefined = smape_terms(truth, predictions)
    if np.any(undefined):
        _logger.debug(_("%d SMAPE terms with zero truth and prediction"), int(undefined.sum()))
    return float(np.mean(terms))


def pearson(x, y):
    """
    Product-moment correlation.

    Raises:
        DegenerateDataError: fewer than three points or a constant series.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ParameterError("y", len(y), _("a series as long as x ({})").format(len(x)))
    if len(x) < 3:
        raise DegenerateDataError(_("correlation needs at least three points"))
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateDataError(_("correlation is undefined for a constant series"))
    r = pearsonr(x, y)[0]
    return float(min(1.0, max(-1.0, r)))


@dataclass(frozen=True, eq=False)
class RegressionDataset:
    """
    (measure value, mean collapse round) pairs of one network and one measure.
    """

    network: str
    measure: str
    x: np.ndarray
    y: np.ndarray
    profile_ids: Tuple[str, ...] = ()
    proportional: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape != y.shape:
            raise ParameterError("y", y.shape, _("the shape of x {}").format(x.shape))
        if not np.all(np.isfinite(x)):
            raise ParameterError("x", None, _("finite measure values"))
        if np.any(~(y >= 1)):
            raise ParameterError("y", float(np.min(y)), _("mean collapse rounds >= 1"))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.proportional is None:
            mask = np.array([pid.startswith("prop-") for pid in self.profile_ids], dtype=bool)
            object.__setattr__(self, "proportional", mask)

    def __len__(self):
        return len(self.x)

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return RegressionDataset(
            network=self.network,
            measure=self.measure,
            x=self.x[mask],
            y=self.y[mask],
            profile_ids=tuple(p for p, keep in zip(self.profile_ids, mask) if keep),
            proportional=self.proportional[mask] if len(self.proportional) else None,
        )


def proportional_only(dataset):
    """
    Keep only the proportionally loaded profiles of a dataset.
    """
    if not len(dataset.proportional):
        raise ParameterError("dataset", dataset.network, _("profile ids to filter on"))
    return dataset.subset(dataset.proportional)


def fold_assignments(n, repeats, folds, seed):
    """
    Held-out index arrays, ``folds`` per repeat. Repeat ``r`` shuffles with a generator seeded by
    ``(seed, r)`` so every repeat is reproducible on its own.
    """
    assignments = []
    for repeat in range(repeats):
        permutation = np.random.default_rng([int(seed), repeat]).permutation(n)
        assignments.append([np.sort(part) for part in np.array_split(permutation, folds)])
    return assignments


@dataclass
class CrossValidationResult:
    """
    Fold scores of one (network, measure) pair.

    ``r2`` is NaN for a fold whose held-out truth is constant; such folds are counted in
    ``undefined_r2`` and left out of ``mean_r2``.
    """

    network: str
    measure: str
    repeats: int
    folds: int
    r2: List[float] = field(default_factory=list)
    smape: List[float] = field(default_factory=list)
    lambdas: List[float] = field(default_factory=list)
    undefined_r2: int = 0
    smape_zero_terms: int = 0
    constant_fits: int = 0

    @property
    def mean_r2(self):
        scores = np.asarray(self.r2, dtype=float)
        return float(np.nanmean(scores)) if np.any(np.isfinite(scores)) else math.nan

    @property
    def mean_smape(self):
        return float(np.mean(self.smape))

    def as_dict(self):
        return {
            "network": self.network,
            "measure": self.measure,
            "repeats": self.repeats,
            "folds": self.folds,
            "r2": list(self.r2),
            "smape": list(self.smape),
            "mean_r2": self.mean_r2,
            "mean_smape": self.mean_smape,
            "lambdas": list(self.lambdas),
            "undefined_r2": self.undefined_r2,
            "smape_zero_terms": self.smape_zero_terms,
            "constant_fits": self.constant_fits,
            "regressor": REGRESSOR,
            "scoring": SCORING,
        }


def cross_validate(dataset, repeats=None, folds=None, seed=None):
    """
    Repeated k-fold cross-validation of the spline on one dataset.

    Raises:
        ParameterError: fewer points than the configured minimum or than folds.
    """
    repeats = settings.CV_REPEATS if repeats is None else repeats
    folds = settings.CV_FOLDS if folds is None else folds
    seed = settings.MASTER_SEED if seed is None else seed
    n = len(dataset)
    minimum = max(settings.CV_MIN_POINTS, folds)
    if n < minimum:
        raise ParameterError(
            "dataset",
            n,
            _("at least {} points for {}-fold cross-validation").format(minimum, folds),
        )

    result = CrossValidationResult(dataset.network, dataset.measure, repeats, folds)
    everything = np.arange(n)
    with ProgressReport(
        message=_("Cross-validating {} on {}").format(dataset.measure, dataset.network),
        code="cross_validate",
        total=repeats * folds,
    ) as progress:
        for held_out_folds in fold_assignments(n, repeats, folds, seed):
            for held_out in held_out_folds:
                train = np.setdiff1d(everything, held_out, assume_unique=True)
                model = fit_spline(dataset.x[train], dataset.y[train])
                predictions = model(dataset.x[held_out])
                truth = dataset.y[held_out]
                try:
                    result.r2.append(r_squared(truth, predictions))
                except DegenerateDataError:
                    result.r2.append(math.nan)
                    result.undefined_r2 += 1
                terms, undefined = smape_terms(truth, predictions)
                result.smape.append(float(np.mean(terms)))
                result.smape_zero_terms += int(undefined.sum())
                result.lambdas.append(model.lam)
                result.constant_fits += int(model.constant)
                progress.increment()
    return result


@dataclass
class EvaluationReport:
    """
    Cross-validation results keyed by (network, measure), plus the spline settings used.
    """

    entries: Dict[Tuple[str, str], CrossValidationResult] = field(default_factory=dict)
    skipped: Dict[Tuple[str, str], str] = field(default_factory=dict)
    proportional_only: bool = False

    def add(self, result):
        self.entries[(result.network, result.measure)] = result

    def spline_settings(self):
        return {
            "regressor": REGRESSOR,
            "scoring": SCORING,
            "knots": settings.SPLINE_KNOTS,
            "degree": SPLINE_DEGREE,
            "lambda_exponents": [
                settings.SPLINE_LAMBDA_MIN_EXP,
                settings.SPLINE_LAMBDA_MAX_EXP,
                settings.SPLINE_LAMBDA_COUNT,
            ],
            "selection": "gcv",
        }

    def as_dict(self):
        return {
            "spline": self.spline_settings(),
            "proportional_only": self.proportional_only,
            "results": [self.entries[key].as_dict() for key in sorted(self.entries)],
            "skipped": [
                {"network": key[0], "measure": key[1], "reason": reason}
                for key, reason in sorted(self.skipped.items())
            ],
        }


def evaluate(datasets, repeats=None, folds=None, seed=None, proportional=False):
    """
    Cross-validate every dataset into one report. Datasets that cannot be scored are logged and
    left out.
    """
    report = EvaluationReport(proportional_only=proportional)
    for dataset in datasets:
        if proportional:
            dataset = proportional_only(dataset)
        try:
            report.add(cross_validate(dataset, repeats, folds, seed))
        except (ParameterError, DegenerateDataError) as exc:
            report.skipped[(dataset.network, dataset.measure)] = str(exc)
            _logger.warning(
                _("Skipping %(measure)s on %(network)s: %(error)s"),
                {"measure": dataset.measure, "network": dataset.network, "error": exc},
            )
    return report
