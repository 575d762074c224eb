import csv
import os
import tempfile
from dataclasses import replace
from unittest import TestCase

import numpy as np

from gridstrain import powerflow
from gridstrain.models import Bus, Line, PowerGrid
from gridstrain.tests.utils import bridged_grid, builtin_grid, two_bus_grid, two_path_grid


def _surplus_grid():
    return PowerGrid(
        "surplus",
        (Bus("1", generation=100.0), Bus("2", demand=80.0)),
        (Line("a", "1", "2", 1.0),),
    )


class TestBalanceIsland(TestCase):
    def test_excess_generation_is_scaled_down(self):
        grid = _surplus_grid()
        injections = powerflow.balance_island(grid, ["1", "2"])
        np.testing.assert_allclose(injections.values, [80.0, -80.0])
        self.assertEqual(injections.bus_ids, ("1", "2"))

    def test_excess_demand_is_scaled_down(self):
        grid = PowerGrid(
            "deficit",
            (Bus("1", generation=30.0), Bus("2", demand=40.0), Bus("3", demand=20.0)),
            (Line("a", "1", "2", 1), Line("b", "1", "3", 1)),
        )
        injections = powerflow.balance_island(grid, [0, 1, 2])
        np.testing.assert_allclose(injections.values, [30.0, -20.0, -10.0])

    def test_dead_island(self):
        grid = PowerGrid("dead", (Bus("1", generation=30.0), Bus("2")), (Line("a", "1", "2", 1),))
        injections = powerflow.balance_island(grid, [0, 1])
        np.testing.assert_array_equal(injections.values, [0.0, 0.0])


class TestSolveDcFlow(TestCase):
    def test_two_bus(self):
        solution = powerflow.solve_grid_flow(two_bus_grid())
        np.testing.assert_allclose(solution.flows, [10.0])
        self.assertEqual(solution.slack_buses, ("A",))
        self.assertLessEqual(max(solution.residuals), 1e-9)

    def test_parallel_paths_split_evenly(self):
        solution = powerflow.solve_grid_flow(two_path_grid())
        np.testing.assert_allclose(solution.flows, [50.0, 50.0, 50.0, 50.0])

    def test_flow_divides_by_impedance(self):
        grid = PowerGrid(
            "triangle",
            (Bus("1", generation=10.0), Bus("2"), Bus("3", demand=10.0)),
            (Line("a", "1", "2", 1.0), Line("b", "2", "3", 1.0), Line("c", "1", "3", 1.0)),
        )
        solution = powerflow.solve_grid_flow(grid)
        np.testing.assert_allclose(solution.flows, [10 / 3, 10 / 3, 20 / 3])

    def test_reversed_line_flips_sign(self):
        grid = PowerGrid(
            "reversed",
            (Bus("A", generation=10.0), Bus("B", demand=10.0)),
            (Line("L", "B", "A", 1.0),),
        )
        np.testing.assert_allclose(powerflow.solve_grid_flow(grid).flows, [-10.0])

    def test_removed_line_carries_nothing(self):
        grid = two_path_grid()
        alive = np.array([False, True, True, True])
        solution = powerflow.solve_grid_flow(grid, alive)
        np.testing.assert_allclose(solution.flows, [0.0, 0.0, 100.0, 100.0], atol=1e-9)

    def test_islands_are_rebalanced_separately(self):
        grid = bridged_grid()
        alive = np.array([True, False, True])
        solution = powerflow.solve_grid_flow(grid, alive)
        np.testing.assert_allclose(solution.flows, [30.0, 0.0, 20.0])
        self.assertEqual(solution.islands, ((0, 1), (2, 3)))
        self.assertEqual(solution.slack_buses, ("1", "3"))

    def test_slack_ties_break_on_id(self):
        grid = PowerGrid(
            "tie",
            (Bus("b", generation=5.0), Bus("a", generation=5.0), Bus("c", demand=10.0)),
            (Line("x", "a", "c", 1.0), Line("y", "b", "c", 1.0)),
        )
        self.assertEqual(powerflow.solve_grid_flow(grid).slack_buses, ("a",))

    def test_linear_in_injections(self):
        grid = builtin_grid("ieee14")
        components, injections = powerflow.balanced_injections(grid)
        once = powerflow.solve_dc_flow(grid, injections, components=components)
        twice = powerflow.solve_dc_flow(grid, 2 * injections, components=components)
        np.testing.assert_allclose(twice.flows, 2 * once.flows, rtol=1e-10, atol=1e-10)

    def test_uniform_susceptance_scale_leaves_flows_unchanged(self):
        grid = builtin_grid("ieee14")
        for factor in (0.25, 3.7, 1e3):
            scaled = PowerGrid(
                grid.name,
                grid.buses,
                tuple(replace(line, susceptance=line.susceptance * factor) for line in grid.lines),
            )
            with self.subTest(factor=factor):
                np.testing.assert_allclose(
                    powerflow.solve_grid_flow(scaled).flows,
                    powerflow.solve_grid_flow(grid).flows,
                    rtol=1e-9,
                    atol=1e-9,
                )

    def test_kirchhoff_on_ieee_grids(self):
        for name in ("ieee14", "ieee30"):
            with self.subTest(grid=name):
                solution = powerflow.solve_grid_flow(builtin_grid(name))
                self.assertLessEqual(max(solution.residuals), 1e-9)
                self.assertAlmostEqual(float(np.sum(solution.injections)), 0.0, places=9)

    def test_rejects_short_injection_vector(self):
        with self.assertRaises(ValueError):
            powerflow.solve_dc_flow(two_bus_grid(), np.zeros(1))

    def test_total_power_served(self):
        grid = _surplus_grid()
        _components, injections = powerflow.balanced_injections(grid)
        self.assertAlmostEqual(powerflow.total_power_served(grid, injections), 80.0)


class TestWriteFlowCsv(TestCase):
    def test_columns_and_stamp(self):
        grid = two_path_grid()
        solution = powerflow.solve_grid_flow(grid)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "flows.csv")
            powerflow.write_flow_csv(path, grid, solution, manifest_id="abc")
            with open(path, newline="") as fp:
                rows = list(csv.DictReader(fp))
        self.assertEqual([row["line_id"] for row in rows], ["a", "b", "c", "d"])
        self.assertEqual({row["manifest_id"] for row in rows}, {"abc"})
        self.assertEqual({row["balance_rule"] for row in rows}, {"proportional"})
        self.assertAlmostEqual(float(rows[0]["flow_mw"]), 50.0)


def _dense_flows(grid, injections):
    """Flows from a pseudo-inverse of the full dense B matrix, built entry by entry."""
    b_matrix = np.zeros((grid.n_buses, grid.n_buses))
    for line, b in zip(grid.lines, grid.susceptance):
        i, j = grid.bus_index[line.from_bus], grid.bus_index[line.to_bus]
        b_matrix[i, i] += b
        b_matrix[j, j] += b
        b_matrix[i, j] -= b
        b_matrix[j, i] -= b
    theta = np.linalg.pinv(b_matrix) @ injections
    return np.array(
        [
            b * (theta[grid.bus_index[ln.from_bus]] - theta[grid.bus_index[ln.to_bus]])
            for ln, b in zip(grid.lines, grid.susceptance)
        ]
    )


class TestAgainstDenseSolve(TestCase):
    def setUp(self):
        self.grid = builtin_grid("ieee14")
        self.components, self.injections = powerflow.balanced_injections(self.grid)

    def test_ieee14_matches_dense_solve(self):
        solution = powerflow.solve_dc_flow(self.grid, self.injections, components=self.components)
        expected = _dense_flows(self.grid, self.injections)
        np.testing.assert_allclose(solution.flows, expected, rtol=1e-8, atol=1e-8)

    def test_slack_choice_does_not_matter(self):
        default = powerflow.solve_dc_flow(self.grid, self.injections, components=self.components)
        for root in (0, 5, 13):
            with self.subTest(slack=root):
                other = powerflow.solve_dc_flow(
                    self.grid, self.injections, components=self.components, slack={0: root}
                )
                np.testing.assert_allclose(other.flows, default.flows, rtol=1e-8, atol=1e-8)

    def test_kirchhoff_under_random_injections(self):
        rng = np.random.default_rng(14)
        for _trial in range(100):
            p = rng.normal(scale=50.0, size=self.grid.n_buses)
            p -= p.mean()
            solution = powerflow.solve_dc_flow(self.grid, p, components=self.components)
            self.assertLessEqual(max(solution.residuals), 1e-8 * np.sum(np.abs(p)))
