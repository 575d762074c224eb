"""
Ordinary kriging of node and edge quantities onto a regular raster.

Distances are planar Euclidean on the stored bus coordinates; the variogram is spherical.
"""
import logging
from gettext import gettext as _

import numpy as np
import scipy.linalg
from scipy.optimize import least_squares
from scipy.spatial.distance import cdist, pdist

from gridstrain.app.settings import settings
from gridstrain.app.util import atomic_open, write_csv
from gridstrain.exceptions import DegenerateDataError
from gridstrain.models import RasterField, RasterSpec, VariogramModel

_logger = logging.getLogger(__name__)

NODATA = -9999


def _split(points):
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3:
        raise DegenerateDataError(_("points must be (x, y, value) rows"))
    if not np.all(np.isfinite(points)):
        raise DegenerateDataError(_("points must be finite"))
    return points[:, :2], points[:, 2]


def merge_duplicates(xy, values):
    """
    Average the values of points sharing a location.

    Returns:
        (numpy.ndarray, numpy.ndarray, int): unique locations, their values and the number of
        points merged away.
    """
    unique, inverse = np.unique(xy, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    if len(unique) == len(xy):
        return xy, values, 0
    sums = np.bincount(inverse, weights=values, minlength=len(unique))
    counts = np.bincount(inverse, minlength=len(unique))
    merged = len(xy) - len(unique)
    _logger.warning(_("Averaged %d duplicate sample locations"), merged)
    return unique, sums / counts, merged


def empirical_variogram(xy, values, bins=None, max_distance=None):
    """
    Binned semivariance ``0.5 * mean((z_i - z_j)^2)`` over point pairs.

    Args:
        bins (int): number of equal-width distance bins.
        max_distance (float): lag cutoff, defaults to a fraction of the largest pairwise distance.

    Returns:
        (numpy.ndarray, numpy.ndarray, numpy.ndarray): mean lag, semivariance and pair count of
        every nonempty bin.
    """
    bins = settings.VARIOGRAM_BINS if bins is None else bins
    lags = pdist(xy)
    if not len(lags) or lags.max() == 0:
        raise DegenerateDataError(_("sample locations all coincide"))
    if max_distance is None:
        max_distance = settings.VARIOGRAM_CUTOFF_FRACTION * lags.max()
    squared = 0.5 * pdist(values.reshape(-1, 1), "sqeuclidean")
    edges = np.linspace(0.0, max_distance, bins + 1)
    which = np.digitize(lags, edges[1:-1])
    inside = lags <= max_distance
    counts = np.bincount(which[inside], minlength=bins)
    lag_sums = np.bincount(which[inside], weights=lags[inside], minlength=bins)
    gamma_sums = np.bincount(which[inside], weights=squared[inside], minlength=bins)
    filled = counts > 0
    return (
        lag_sums[filled] / counts[filled],
        gamma_sums[filled] / counts[filled],
        counts[filled],
    )


def fit_variogram(points, bins=None, max_distance=None):
    """
    Least-squares fit of a spherical variogram to the empirical one, weighted by pair counts.

    Args:
        points (numpy.ndarray): ``(x, y, value)`` rows.

    Returns:
        VariogramModel: nugget, sill contribution and range.

    Raises:
        DegenerateDataError: too few points or coincident locations.
    """
    xy, values = _split(points)
    xy, values, _merged = merge_duplicates(xy, values)
    if len(xy) < settings.VARIOGRAM_MIN_POINTS:
        raise DegenerateDataError(
            _("variogram fitting needs at least {} distinct points, got {}").format(
                settings.VARIOGRAM_MIN_POINTS, len(xy)
            )
        )
    lag, gamma, counts = empirical_variogram(xy, values, bins, max_distance)
    if np.all(gamma == 0):
        return VariogramModel(nugget=0.0, sill=0.0, range=float(lag.max()))

    weights = np.sqrt(counts)
    top = float(lag.max())

    def residuals(params):
        return weights * (VariogramModel(*params)(lag) - gamma)

    start = [float(gamma.min()) / 2, float(gamma.max()), top / 2]
    fit = least_squares(
        residuals,
        start,
        bounds=([0.0, 0.0, top * 1e-6], [np.inf, np.inf, 2 * float(pdist(xy).max())]),
    )
    nugget, sill, rng = (float(v) for v in fit.x)
    return VariogramModel(nugget=nugget, sill=sill, range=rng)


def kriging_system(xy, model):
    """
    The ordinary kriging matrix: semivariances bordered by the unbiasedness row and column.
    """
    n = len(xy)
    matrix = np.zeros((n + 1, n + 1))
    matrix[:n, :n] = model(cdist(xy, xy))
    matrix[:n, n] = 1.0
    matrix[n, :n] = 1.0
    return matrix


def kriging_weights(xy, model, targets):
    """
    Weights and Lagrange multipliers for each target location.

    Returns:
        (numpy.ndarray, numpy.ndarray, numpy.ndarray): weights ``(n_targets, n_points)``,
        multipliers ``(n_targets,)`` and the target semivariances ``(n_targets, n_points)``.
    """
    xy = np.asarray(xy, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    n = len(xy)
    gamma0 = model(cdist(targets, xy))
    rhs = np.vstack([gamma0.T, np.ones(len(targets))])
    try:
        factor = scipy.linalg.lu_factor(kriging_system(xy, model), check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise DegenerateDataError(_("kriging system is singular: {}").format(exc))
    solution = scipy.linalg.lu_solve(factor, rhs)
    if not np.all(np.isfinite(solution)):
        raise DegenerateDataError(_("kriging system is singular"))
    return solution[:n].T, solution[n], gamma0


def krige(points, model, spec):
    """
    Ordinary kriging onto the cell centres of a raster.

    Duplicate locations are averaged first and counted in the raster metadata. A model with no
    sill (a constant field) yields the mean value everywhere with zero variance.

    Args:
        points (numpy.ndarray): ``(x, y, value)`` rows.
        model (VariogramModel): fitted variogram.
        spec (RasterSpec): the output raster.

    Returns:
        RasterField: estimates and kriging variances.
    """
    xy, values = _split(points)
    if not len(xy):
        raise DegenerateDataError(_("kriging needs at least one point"))
    xy, values, merged = merge_duplicates(xy, values)
    gx, gy = spec.centres()
    targets = np.column_stack([gx.ravel(), gy.ravel()])
    metadata = {
        "variogram": model.as_dict(),
        "distance": "planar_euclidean",
        "duplicates_merged": merged,
        "points": len(xy),
        "bins": settings.VARIOGRAM_BINS,
        "cutoff_fraction": settings.VARIOGRAM_CUTOFF_FRACTION,
    }
    if model.total_sill == 0:
        estimate = np.full(len(targets), float(np.mean(values)))
        variance = np.zeros(len(targets))
        metadata["constant_field"] = True
    else:
        weights, multipliers, gamma0 = kriging_weights(xy, model, targets)
        estimate = weights @ values
        variance = np.maximum(np.sum(weights * gamma0, axis=1) + multipliers, 0.0)
    return RasterField(
        xmin=spec.xmin,
        ymin=spec.ymin,
        cell_size=spec.cell_size,
        values=estimate.reshape(spec.nrows, spec.ncols),
        variance=variance.reshape(spec.nrows, spec.ncols),
        metadata=metadata,
    )


def node_points(grid, values):
    """``(x, y, value)`` rows of a per-bus quantity."""
    return np.column_stack([grid.coordinates, np.asarray(values, dtype=float)])


def edge_points(grid, values):
    """``(x, y, value)`` rows of a per-line quantity placed at line midpoints."""
    midpoints = (grid.coordinates[grid.from_index] + grid.coordinates[grid.to_index]) / 2.0
    return np.column_stack([midpoints, np.asarray(values, dtype=float)])


def krige_nodes(grid, values, spec=None, model=None):
    """
    Krige a per-bus quantity (e.g. elevation); the variogram is fitted when not given.
    """
    points = node_points(grid, values)
    model = fit_variogram(points) if model is None else model
    spec = RasterSpec.covering(points[:, :2]) if spec is None else spec
    return krige(points, model, spec)


def krige_edges(grid, values, spec=None, model=None):
    """
    Krige a per-line quantity (strain, tension) from line midpoints.
    """
    points = edge_points(grid, values)
    model = fit_variogram(points) if model is None else model
    spec = RasterSpec.covering(points[:, :2]) if spec is None else spec
    raster = krige(points, model, spec)
    raster.metadata["support"] = "edge_midpoints"
    return raster


def write_raster_csv(path, raster, manifest_id=""):
    """One row per cell centre: x, y, value and kriging variance."""
    gx, gy = raster.cell_centres()
    rows = (
        {"x": float(x), "y": float(y), "value": float(v), "variance": float(s)}
        for x, y, v, s in zip(
            gx.ravel(), gy.ravel(), raster.values.ravel(), raster.variance.ravel()
        )
    )
    write_csv(path, ["x", "y", "value", "variance"], rows, manifest_id=manifest_id)


def write_esri_ascii(path, raster, which="values"):
    """
    ESRI ASCII grid of the estimates (or the variances); rows are written north to south.
    """
    data = getattr(raster, which)
    nrows, ncols = data.shape
    with atomic_open(path) as handle:
        handle.write("ncols {}\n".format(ncols))
        handle.write("nrows {}\n".format(nrows))
        handle.write("xllcorner {!r}\n".format(float(raster.xmin)))
        handle.write("yllcorner {!r}\n".format(float(raster.ymin)))
        handle.write("cellsize {!r}\n".format(float(raster.cell_size)))
        handle.write("NODATA_value {}\n".format(NODATA))
        for row in data[::-1]:
            handle.write(" ".join(repr(float(v)) if np.isfinite(v) else str(NODATA) for v in row))
            handle.write("\n")
