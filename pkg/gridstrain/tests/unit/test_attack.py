import random
from fractions import Fraction
from unittest import TestCase

import networkx as nx
import numpy as np

from gridstrain import attack
from gridstrain.exceptions import DegenerateDataError, ParameterError
from gridstrain.models import Bus, LineLimitProfile, PowerGrid, ProfileParameters
from gridstrain.powerflow import solve_grid_flow
from gridstrain.profiles import proportional_profile
from gridstrain.tests.utils import bridged_grid, builtin_grid, two_bus_grid, two_path_grid


def _profile(capacities, profile_id="test"):
    return LineLimitProfile(profile_id, capacities, ProfileParameters(kind="real"))


class TestSplitMix64(TestCase):
    def test_reference_output(self):
        self.assertEqual(attack.SplitMix64(0).next(), 0xE220A8397B1DCDAF)

    def test_below_stays_in_range(self):
        rng = attack.SplitMix64(1234)
        draws = [rng.below(7) for _i in range(500)]
        self.assertEqual(set(draws), set(range(7)))

    def test_derived_seeds(self):
        self.assertEqual(attack.derive_seed(42, 3), attack.derive_seed(42, 3))
        seeds = {attack.derive_seed(42, i) for i in range(100)}
        self.assertEqual(len(seeds), 100)
        self.assertNotEqual(attack.derive_seed(42, 0), attack.derive_seed(43, 0))
        self.assertTrue(all(0 <= s < 2**64 for s in seeds))


class TestAttackSequence(TestCase):
    def test_permutation_of_line_ids(self):
        grid = builtin_grid("ieee14")
        sequence = attack.attack_sequence(grid, attack.derive_seed(0, 0))
        self.assertEqual(sorted(sequence.order), sorted(grid.line_ids))

    def test_seed_determines_order(self):
        grid = builtin_grid("ieee14")
        first = attack.attack_sequence(grid, 99)
        self.assertEqual(first, attack.attack_sequence(grid, 99))
        self.assertNotEqual(first.order, attack.attack_sequence(grid, 100).order)


class TestMolloyReed(TestCase):
    def test_examples(self):
        self.assertTrue(attack.molloy_reed_has_giant([3, 3, 3, 3]))
        self.assertFalse(attack.molloy_reed_has_giant([2, 2, 2, 2, 2]))
        self.assertFalse(attack.molloy_reed_has_giant([1, 2, 1]))
        self.assertFalse(attack.molloy_reed_has_giant([0, 0]))

    def test_empty_degree_list(self):
        with self.assertRaises(ParameterError):
            attack.molloy_reed_has_giant([])

    def test_matches_rational_means(self):
        rng = random.Random(7)
        for _trial in range(200):
            degrees = [rng.randint(0, 6) for _i in range(rng.randint(1, 30))]
            n = len(degrees)
            mean_sq = Fraction(sum(k * k for k in degrees), n)
            mean = Fraction(sum(degrees), n)
            self.assertEqual(attack.molloy_reed_has_giant(degrees), mean_sq - 2 * mean > 0)


class TestPropagateCascade(TestCase):
    def test_rerouted_flow_trips_the_other_path(self):
        grid = two_path_grid()
        alive = np.array([False, True, True, True])
        state, tripped = attack.propagate_cascade(grid, alive, _profile([60.0] * 4))
        self.assertEqual(tripped, (2, 3))
        np.testing.assert_array_equal(state.alive, [False, True, False, False])
        self.assertEqual(state.served, 0.0)
        np.testing.assert_array_equal(alive, [False, True, True, True])

    def test_enough_capacity_means_no_trips(self):
        grid = two_path_grid()
        alive = np.array([False, True, True, True])
        state, tripped = attack.propagate_cascade(grid, alive, _profile([100.0] * 4))
        self.assertEqual(tripped, ())
        self.assertAlmostEqual(state.served, 100.0)

    def test_exact_capacity_does_not_trip(self):
        grid = two_bus_grid()
        state, tripped = attack.propagate_cascade(grid, np.array([True]), _profile([10.0]))
        self.assertEqual(tripped, ())

    def test_bridge_removal_rebalances_islands(self):
        grid = bridged_grid()
        alive = np.array([True, False, True])
        state, tripped = attack.propagate_cascade(grid, alive, _profile([100.0] * 3))
        self.assertEqual(tripped, ())
        np.testing.assert_allclose(state.solution.flows, [30.0, 0.0, 20.0])
        self.assertAlmostEqual(state.served, 50.0)


class TestRunAttack(TestCase):
    def test_two_bus_collapses_at_first_removal(self):
        result = attack.run_attack(two_bus_grid(), _profile([20.0]), seed=5)
        self.assertEqual(result.collapse_round, 1)
        self.assertEqual(result.targeted, ("L",))
        self.assertEqual(result.cascade_sizes, (0,))
        self.assertEqual(result.power_lost_fraction, 1.0)
        self.assertEqual(result.surviving_line_fraction, 0.0)

    def test_cascade_counts_are_recorded(self):
        result = attack.run_attack(two_path_grid(), _profile([60.0] * 4), seed=11)
        self.assertEqual(result.collapse_round, 1)
        self.assertEqual(result.cascade_sizes, (2,))
        self.assertEqual(result.power_lost_fraction, 1.0)
        self.assertEqual(result.surviving_line_fraction, 0.25)

    def test_deterministic(self):
        grid = builtin_grid("ieee14")
        profile = proportional_profile(grid, solve_grid_flow(grid), 1.5)
        seed = attack.derive_seed(3, 1)
        first = attack.run_attack(grid, profile, seed)
        self.assertEqual(first, attack.run_attack(grid, profile, seed))

    def test_bounds(self):
        grid = builtin_grid("ieee14")
        profile = proportional_profile(grid, solve_grid_flow(grid), 1.1)
        for run in range(5):
            result = attack.run_attack(grid, profile, attack.derive_seed(0, run))
            self.assertGreaterEqual(result.collapse_round, 1)
            self.assertLessEqual(result.collapse_round, grid.n_lines)
            self.assertTrue(0.0 <= result.power_lost_fraction <= 1.0)
            self.assertEqual(len(result.cascade_sizes), result.collapse_round)
            self.assertLessEqual(result.collapse_round + sum(result.cascade_sizes), grid.n_lines)

    def test_grid_without_lines(self):
        grid = PowerGrid(
            name="no-lines",
            buses=(Bus("A", 0.0, 0.0, generation=5.0), Bus("B", 1.0, 0.0, demand=5.0)),
            lines=(),
        )
        with self.assertRaises(DegenerateDataError):
            attack.run_attack(grid, _profile([]), seed=1)
        with self.assertRaises(DegenerateDataError):
            attack.topological_attack(grid, seed=1)

    def test_rounds_replay_with_cascades_and_giant_checks(self):
        grid = builtin_grid("ieee14")
        profile = proportional_profile(grid, solve_grid_flow(grid), 1.2)
        for run in range(10):
            seed = attack.derive_seed(8, run)
            result = attack.run_attack(grid, profile, seed)
            alive = np.ones(grid.n_lines, dtype=bool)
            largest = []
            for round_index, (line_id, size) in enumerate(
                zip(result.targeted, result.cascade_sizes)
            ):
                self.assertTrue(alive[grid.line_index[line_id]])
                alive[grid.line_index[line_id]] = False
                state, tripped = attack.propagate_cascade(grid, alive, profile)
                self.assertEqual(len(tripped), size)
                self.assertEqual(np.count_nonzero(alive & ~state.alive), size)
                alive = state.alive.copy()

                graph = nx.MultiGraph()
                graph.add_nodes_from(range(grid.n_buses))
                graph.add_edges_from(
                    zip(grid.from_index[alive].tolist(), grid.to_index[alive].tolist())
                )
                degrees = [degree for _node, degree in sorted(graph.degree())]
                np.testing.assert_array_equal(grid.degrees(alive), degrees)
                has_giant = attack.molloy_reed_has_giant(degrees)
                last = round_index == result.collapse_round - 1
                self.assertEqual(has_giant, not last)
                largest.append(max(len(c) for c in nx.connected_components(graph)))
            self.assertEqual(largest, sorted(largest, reverse=True))
            self.assertEqual(
                result.surviving_line_fraction, np.count_nonzero(alive) / grid.n_lines
            )


class TestTopologicalAttack(TestCase):
    def test_no_cascades(self):
        grid = builtin_grid("ieee14")
        result = attack.topological_attack(grid, 17)
        self.assertEqual(set(result.cascade_sizes), {0})
        order = attack.attack_sequence(grid, 17).order
        self.assertEqual(result.targeted, order[: result.collapse_round])  # noqa: E203

    def test_bridge_loss_counts_islanded_power(self):
        grid = bridged_grid()
        expected = {"x": 0.2, "y": 0.0, "z": 0.4}
        for seed in range(20):
            result = attack.topological_attack(grid, seed)
            self.assertEqual(result.collapse_round, 1)
            (target,) = result.targeted
            self.assertAlmostEqual(result.power_lost_fraction, expected[target])


class TestRunCampaign(TestCase):
    def test_mean_over_runs(self):
        grid = two_bus_grid()
        campaign = attack.run_campaign(grid, _profile([20.0], "p"), n_runs=4, master_seed=1)
        self.assertEqual(len(campaign.runs), 4)
        self.assertEqual(campaign.mean_collapse_round, 1.0)
        self.assertEqual(campaign.mean_power_lost, 1.0)
        seeds = [attack.derive_seed(1, i) for i in range(4)]
        self.assertEqual([r.seed for r in campaign.runs], seeds)
        self.assertEqual(campaign.as_record()["n_runs"], 4)

    def test_needs_a_run(self):
        with self.assertRaises(ParameterError):
            attack.run_campaign(two_bus_grid(), _profile([20.0]), n_runs=0)
