from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np


@dataclass(frozen=True)
class VariogramModel:
    """
    Spherical semivariogram: nugget ``c0``, sill contribution ``c`` and range ``a``.
    """

    nugget: float
    sill: float
    range: float
    kind: str = "spherical"

    def __call__(self, h):
        """
        Semivariance at lag(s) ``h``. ``gamma(0) = 0`` at the point itself, so a nugget only shows
        up for strictly positive lags.
        """
        h = np.asarray(h, dtype=float)
        ratio = np.minimum(h / self.range, 1.0)
        gamma = self.nugget + self.sill * (1.5 * ratio - 0.5 * ratio**3)
        return np.where(h > 0, gamma, 0.0)

    @property
    def total_sill(self):
        return self.nugget + self.sill

    def as_dict(self):
        return {"kind": self.kind, "nugget": self.nugget, "sill": self.sill, "range": self.range}


@dataclass(frozen=True, eq=False)
class RasterField:
    """
    Interpolated values on a regular grid of cell centres.

    ``values`` and ``variance`` have shape ``(nrows, ncols)``; row 0 is the southernmost row
    (``ymin + cell_size / 2``).
    """

    xmin: float
    ymin: float
    cell_size: float
    values: np.ndarray
    variance: np.ndarray
    metadata: Dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.values.shape

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        nrows, ncols = self.shape
        return (
            self.xmin,
            self.ymin,
            self.xmin + ncols * self.cell_size,
            self.ymin + nrows * self.cell_size,
        )

    def cell_centres(self):
        nrows, ncols = self.shape
        xs = self.xmin + (np.arange(ncols) + 0.5) * self.cell_size
        ys = self.ymin + (np.arange(nrows) + 0.5) * self.cell_size
        return np.meshgrid(xs, ys)


@dataclass(frozen=True)
class RasterSpec:
    """
    Lower-left corner, square cell size and cell counts of a raster.
    """

    xmin: float
    ymin: float
    cell_size: float
    ncols: int
    nrows: int

    def __post_init__(self):
        if not self.cell_size > 0 or self.ncols < 1 or self.nrows < 1:
            raise ValueError(
                "raster needs a positive cell size and at least one row and column, got {}".format(
                    self
                )
            )

    @classmethod
    def covering(cls, xy, cells=100, padding=0.05):
        """
        A raster over the bounding box of ``xy`` (padded by a fraction of its extent), ``cells``
        cells along the longer side.
        """
        xy = np.asarray(xy, dtype=float)
        low, high = xy.min(axis=0), xy.max(axis=0)
        extent = float(max(high - low)) or 1.0
        low = low - padding * extent
        high = high + padding * extent
        cell_size = float(max(high - low)) / cells
        ncols, nrows = (int(np.ceil(v / cell_size)) or 1 for v in high - low)
        return cls(float(low[0]), float(low[1]), cell_size, max(ncols, 1), max(nrows, 1))

    def centres(self):
        xs = self.xmin + (np.arange(self.ncols) + 0.5) * self.cell_size
        ys = self.ymin + (np.arange(self.nrows) + 0.5) * self.cell_size
        return np.meshgrid(xs, ys)
