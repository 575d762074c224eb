import math
import os
import tempfile
from unittest import TestCase

import numpy as np
from scipy.linalg import cholesky
from scipy.spatial.distance import cdist

from gridstrain import geospatial
from gridstrain.exceptions import DegenerateDataError
from gridstrain.models import RasterSpec, VariogramModel
from gridstrain.tests.utils import builtin_grid

MODEL = VariogramModel(nugget=0.0, sill=1.0, range=10.0)


def _corner_points():
    return np.array(
        [
            [0.0, 0.0, 1.0],
            [2.0, 0.0, 2.0],
            [0.0, 2.0, 3.0],
            [2.0, 2.0, 4.0],
            [1.0, 1.0, 7.0],
        ]
    )


class TestVariogramModel(TestCase):
    def test_spherical_shape(self):
        model = VariogramModel(nugget=0.5, sill=2.0, range=4.0)
        self.assertEqual(float(model(0.0)), 0.0)
        self.assertAlmostEqual(float(model(2.0)), 0.5 + 2.0 * (0.75 - 0.0625))
        self.assertAlmostEqual(float(model(4.0)), 2.5)
        self.assertAlmostEqual(float(model(40.0)), 2.5)
        self.assertEqual(model.total_sill, 2.5)


class TestKrigingWeights(TestCase):
    def test_centroid_of_equilateral_triangle(self):
        xy = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
        centroid = xy.mean(axis=0)
        weights, _multipliers, _gamma = geospatial.kriging_weights(xy, MODEL, centroid)
        np.testing.assert_allclose(weights[0], [1 / 3, 1 / 3, 1 / 3])

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(3)
        xy = rng.uniform(0.0, 5.0, size=(8, 2))
        targets = rng.uniform(-1.0, 6.0, size=(20, 2))
        weights, _multipliers, _gamma = geospatial.kriging_weights(xy, MODEL, targets)
        np.testing.assert_allclose(weights.sum(axis=1), np.ones(20))

    def test_asymmetric_triangle_matches_bordered_system(self):
        xy = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]])
        target = np.array([1.0, 1.0])

        def spherical(h):
            h = min(h / 10.0, 1.0)
            return 1.5 * h - 0.5 * h**3

        system = np.ones((4, 4))
        system[3, 3] = 0.0
        for i in range(3):
            for j in range(3):
                system[i, j] = spherical(float(np.hypot(*(xy[i] - xy[j]))))
        rhs = np.ones(4)
        rhs[:3] = [spherical(float(np.hypot(*(p - target)))) for p in xy]
        expected = np.linalg.solve(system, rhs)

        weights, multipliers, gamma = geospatial.kriging_weights(xy, MODEL, target)
        np.testing.assert_allclose(weights[0], expected[:3], rtol=1e-10)
        self.assertAlmostEqual(multipliers[0], expected[3])
        np.testing.assert_allclose(gamma[0], rhs[:3])
        self.assertEqual(int(np.argmax(weights[0])), 0)
        self.assertAlmostEqual(weights[0].sum(), 1.0)

    def test_target_on_a_data_point(self):
        xy = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]])
        weights, _multipliers, _gamma = geospatial.kriging_weights(xy, MODEL, xy[1])
        np.testing.assert_allclose(weights[0], [0.0, 1.0, 0.0], atol=1e-12)

    def test_singular_system(self):
        xy = np.array([[0.0, 0.0], [0.0, 0.0]])
        with self.assertRaises(DegenerateDataError):
            geospatial.kriging_weights(xy, MODEL, [[1.0, 1.0]])


class TestKrige(TestCase):
    def test_exact_at_data_points(self):
        spec = RasterSpec(-0.5, -0.5, 1.0, 3, 3)
        raster = geospatial.krige(_corner_points(), MODEL, spec)
        self.assertEqual(raster.shape, (3, 3))
        self.assertAlmostEqual(raster.values[0, 0], 1.0)
        self.assertAlmostEqual(raster.values[0, 2], 2.0)
        self.assertAlmostEqual(raster.values[2, 0], 3.0)
        self.assertAlmostEqual(raster.values[2, 2], 4.0)
        self.assertAlmostEqual(raster.values[1, 1], 7.0)
        self.assertAlmostEqual(raster.variance[1, 1], 0.0)
        self.assertGreater(raster.variance[0, 1], 0.0)
        self.assertEqual(raster.bounds, (-0.5, -0.5, 2.5, 2.5))

    def test_zero_sill_gives_constant_field(self):
        model = VariogramModel(nugget=0.0, sill=0.0, range=1.0)
        raster = geospatial.krige(_corner_points(), model, RasterSpec(0.0, 0.0, 0.5, 4, 2))
        np.testing.assert_allclose(raster.values, np.full((2, 4), 3.4))
        np.testing.assert_array_equal(raster.variance, np.zeros((2, 4)))
        self.assertTrue(raster.metadata["constant_field"])

    def test_duplicates_are_averaged(self):
        points = np.vstack([_corner_points(), [[1.0, 1.0, 9.0]]])
        raster = geospatial.krige(points, MODEL, RasterSpec(0.5, 0.5, 1.0, 1, 1))
        self.assertAlmostEqual(raster.values[0, 0], 8.0)
        self.assertEqual(raster.metadata["duplicates_merged"], 1)
        self.assertEqual(raster.metadata["points"], 5)

    def test_rejects_bad_points(self):
        with self.assertRaises(DegenerateDataError):
            geospatial.krige(np.zeros((3, 2)), MODEL, RasterSpec(0, 0, 1, 1, 1))
        with self.assertRaises(DegenerateDataError):
            geospatial.krige([[0.0, 0.0, math.nan]], MODEL, RasterSpec(0, 0, 1, 1, 1))


class TestMergeDuplicates(TestCase):
    def test_nothing_to_merge(self):
        xy = np.array([[0.0, 0.0], [1.0, 0.0]])
        merged_xy, values, merged = geospatial.merge_duplicates(xy, np.array([1.0, 2.0]))
        self.assertEqual(merged, 0)
        np.testing.assert_array_equal(values, [1.0, 2.0])
        self.assertIs(merged_xy, xy)

    def test_mean_of_coincident_values(self):
        xy = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]])
        merged_xy, values, merged = geospatial.merge_duplicates(xy, np.array([2.0, 5.0, 4.0]))
        self.assertEqual(merged, 1)
        np.testing.assert_array_equal(merged_xy, [[0.0, 0.0], [1.0, 1.0]])
        np.testing.assert_array_equal(values, [3.0, 5.0])


class TestFitVariogram(TestCase):
    def test_too_few_points(self):
        with self.assertRaises(DegenerateDataError):
            geospatial.fit_variogram(_corner_points()[:4])

    def test_constant_values_have_no_sill(self):
        points = _corner_points()
        points[:, 2] = 5.0
        model = geospatial.fit_variogram(points)
        self.assertEqual(model.total_sill, 0.0)

    def test_trend_has_positive_sill(self):
        xs, ys = np.meshgrid(np.arange(6.0), np.arange(6.0))
        points = np.column_stack([xs.ravel(), ys.ravel(), (xs + ys).ravel()])
        model = geospatial.fit_variogram(points)
        self.assertGreater(model.total_sill, 0.0)
        self.assertGreater(model.range, 0.0)
        self.assertGreaterEqual(model.nugget, 0.0)

    def test_recovers_range_of_a_simulated_field(self):
        truth = VariogramModel(nugget=0.0, sill=1.0, range=6.0)
        xs, ys = np.meshgrid(np.arange(40.0), np.arange(40.0))
        xy = np.column_stack([xs.ravel(), ys.ravel()])
        covariance = truth.total_sill - truth(cdist(xy, xy))
        lower = cholesky(covariance + 1e-9 * np.eye(len(xy)), lower=True)
        rng = np.random.default_rng(11)
        ranges = []
        for _ in range(4):
            values = lower @ rng.standard_normal(len(xy))
            model = geospatial.fit_variogram(
                np.column_stack([xy, values]), bins=20, max_distance=18.0
            )
            ranges.append(model.range)
        self.assertLess(abs(np.mean(ranges) - truth.range), 0.2 * truth.range)

    def test_empirical_variogram_counts_pairs(self):
        xy = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        lag, gamma, counts = geospatial.empirical_variogram(
            xy, np.array([0.0, 1.0, 2.0]), bins=2, max_distance=2.5
        )
        np.testing.assert_allclose(lag, [1.0, 2.0])
        np.testing.assert_allclose(gamma, [0.5, 2.0])
        np.testing.assert_array_equal(counts, [2, 1])


class TestGridKriging(TestCase):
    def test_nodes_and_edges(self):
        grid = builtin_grid("ieee14")
        elevation = grid.coordinates[:, 0] - grid.coordinates[:, 0].mean()
        spec = RasterSpec.covering(grid.coordinates, cells=10)
        nodes = geospatial.krige_nodes(grid, elevation, spec=spec)
        self.assertEqual(nodes.shape, (spec.nrows, spec.ncols))
        self.assertTrue(np.all(np.isfinite(nodes.values)))

        strain = np.linspace(0.01, 0.2, grid.n_lines)
        edges = geospatial.krige_edges(grid, strain, spec=spec, model=MODEL)
        self.assertEqual(edges.metadata["support"], "edge_midpoints")
        self.assertEqual(edges.metadata["variogram"], MODEL.as_dict())


class TestWriters(TestCase):
    def setUp(self):
        self.raster = geospatial.krige(_corner_points(), MODEL, RasterSpec(-0.5, -0.5, 1.0, 3, 3))

    def test_esri_ascii(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "field.asc")
            geospatial.write_esri_ascii(path, self.raster)
            with open(path) as fp:
                lines = fp.read().splitlines()
        self.assertEqual(lines[0], "ncols 3")
        self.assertEqual(lines[1], "nrows 3")
        self.assertEqual(lines[2], "xllcorner -0.5")
        self.assertEqual(lines[4], "cellsize 1.0")
        self.assertEqual(lines[5], "NODATA_value -9999")
        north = [float(v) for v in lines[6].split()]
        south = [float(v) for v in lines[8].split()]
        self.assertAlmostEqual(north[0], 3.0)
        self.assertAlmostEqual(south[0], 1.0)

    def test_raster_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "field.csv")
            geospatial.write_raster_csv(path, self.raster, manifest_id="m")
            with open(path) as fp:
                header = fp.readline().strip().split(",")
                rows = fp.read().splitlines()
        self.assertEqual(header[-4:], ["x", "y", "value", "variance"])
        self.assertEqual(len(rows), 9)
