"""
Seeded random line attacks with overload cascades, stopped at giant-component collapse.

Every run draws its whole attack order up front from a 64-bit seed, then removes one line per
round. After each removal the grid is re-islanded, rebalanced and re-solved until no line carries
more than its capacity; the Molloy-Reed criterion ``<k^2> - 2<k> > 0`` over all original buses
decides whether a giant component can still exist.
"""
import logging
from dataclasses import dataclass
from gettext import gettext as _

import numpy as np

from gridstrain.app.progress import ProgressReport
from gridstrain.app.settings import settings
from gridstrain.constants import MASK64
from gridstrain.exceptions import DegenerateDataError, ParameterError
from gridstrain.models import AttackCampaignResult, AttackRunResult, AttackSequence, FlowSolution
from gridstrain.powerflow import balanced_injections, solve_dc_flow, total_power_served

_logger = logging.getLogger(__name__)

# SplitMix64 constants.
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_MULTIPLIER_1 = 0xBF58476D1CE4E5B9
MIX_MULTIPLIER_2 = 0x94D049BB133111EB


def splitmix64(state):
    """
    One SplitMix64 step.

    Returns:
        (int, int): the advanced state and the 64-bit output.
    """
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * MIX_MULTIPLIER_1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_MULTIPLIER_2) & MASK64
    return state, z ^ (z >> 31)


def derive_seed(master_seed, run_index):
    """
    Seed of run ``run_index`` of a campaign: the master seed and the index hashed together.
    """
    _state, mixed_master = splitmix64(int(master_seed) & MASK64)
    _state, seed = splitmix64((mixed_master + int(run_index)) & MASK64)
    return seed


class SplitMix64:
    """
    Tiny portable 64-bit generator, so attack orders do not depend on numpy's bit generators.
    """

    def __init__(self, seed):
        self.state = int(seed) & MASK64

    def next(self):
        self.state, value = splitmix64(self.state)
        return value

    def below(self, bound):
        """Uniform integer in ``[0, bound)`` by rejection, without modulo bias."""
        threshold = ((1 << 64) - bound) % bound
        while True:
            value = self.next()
            if value >= threshold:
                return value % bound


def attack_sequence(grid, seed):
    """
    Fisher-Yates shuffle of the line ids in grid order.
    """
    order = list(grid.line_ids)
    rng = SplitMix64(seed)
    for i in range(len(order) - 1, 0, -1):
        j = rng.below(i + 1)
        order[i], order[j] = order[j], order[i]
    return AttackSequence(seed=int(seed), order=tuple(order))


def molloy_reed_has_giant(degrees):
    """
    ``<k^2> - 2<k> > 0``, evaluated in exact integer arithmetic.

    Both means share the denominator N, so the test reduces to ``sum(k^2) - 2 sum(k) > 0``.
    """
    degrees = [int(k) for k in degrees]
    if not degrees:
        raise ParameterError("degrees", degrees, _("a nonempty degree multiset"))
    return sum(k * k for k in degrees) - 2 * sum(degrees) > 0


@dataclass(frozen=True, eq=False)
class CascadeState:
    """
    A grid state during an attack: the lines still in service and their solved flows.
    """

    alive: np.ndarray
    solution: FlowSolution

    @property
    def served(self):
        return float(np.sum(np.maximum(self.solution.injections, 0.0)))


def solve_state(grid, alive):
    components, injections = balanced_injections(grid, alive)
    solution = solve_dc_flow(grid, injections, alive=alive, components=components)
    return CascadeState(alive=alive, solution=solution)


def propagate_cascade(grid, alive, profile, overload_rtol=None):
    """
    Trip overloaded lines until the flows settle.

    Each pass re-islands the grid over the surviving lines, balances every island, solves the DC
    flow, and removes every line with ``|flow| > capacity * (1 + rtol)`` at once. Dead islands
    carry no flow, so their lines stay in service.

    Args:
        grid (PowerGrid): the grid.
        alive (numpy.ndarray): boolean mask of lines in service; not modified.
        profile (LineLimitProfile): line capacities.
        overload_rtol (float): relative tolerance on the capacity test, defaults to the setting.

    Returns:
        (CascadeState, tuple): the fixed point and the indices of the tripped lines, in trip order
        (sorted within a pass).
    """
    rtol = settings.OVERLOAD_RTOL if overload_rtol is None else overload_rtol
    limits = profile.array * (1.0 + rtol)
    alive = np.array(alive, dtype=bool)
    tripped = []
    while True:
        state = solve_state(grid, alive)
        over = np.flatnonzero(alive & (np.abs(state.solution.flows) > limits))
        if not len(over):
            return state, tuple(int(i) for i in tripped)
        alive[over] = False
        tripped.extend(over)


def run_attack(grid, profile, seed, overload_rtol=None):
    """
    Attack a profile with one seed until the giant component collapses.

    Every round removes the next line of the fixed order that is still in service, lets the cascade
    settle, then checks the Molloy-Reed criterion on the surviving degrees of all buses. The first
    round where it fails is the collapse round.

    Raises:
        DegenerateDataError: the grid has no line to attack.
    """
    _require_lines(grid)
    sequence = attack_sequence(grid, seed)
    initial = solve_state(grid, np.ones(grid.n_lines, dtype=bool))
    state = initial
    targeted = []
    cascade_sizes = []
    for line_id in sequence.order:
        index = grid.line_index[line_id]
        if not state.alive[index]:
            continue
        alive = state.alive.copy()
        alive[index] = False
        targeted.append(line_id)
        state, tripped = propagate_cascade(grid, alive, profile, overload_rtol)
        cascade_sizes.append(len(tripped))
        if not molloy_reed_has_giant(grid.degrees(state.alive)):
            break
    return _run_result(grid, sequence.seed, targeted, cascade_sizes, initial, state)


def _require_lines(grid):
    if grid.n_lines == 0:
        raise DegenerateDataError(_("grid {} has no lines to attack").format(grid.name))


def _lost_fraction(initial_served, served):
    if initial_served <= 0:
        return 0.0
    return float(min(1.0, max(0.0, 1.0 - served / initial_served)))


def _run_result(grid, seed, targeted, cascade_sizes, initial, final):
    return AttackRunResult(
        seed=int(seed),
        collapse_round=len(targeted),
        targeted=tuple(targeted),
        cascade_sizes=tuple(cascade_sizes),
        power_lost_fraction=_lost_fraction(initial.served, final.served),
        surviving_line_fraction=float(np.count_nonzero(final.alive)) / grid.n_lines,
    )


def topological_attack(grid, seed):
    """
    The same attack with no flow model: lines only leave when targeted.

    Power lost still accounts for islanding, since balancing needs only the topology.
    """
    _require_lines(grid)
    sequence = attack_sequence(grid, seed)
    alive = np.ones(grid.n_lines, dtype=bool)
    _components, injections = balanced_injections(grid, alive)
    initial_served = total_power_served(grid, injections)
    targeted = []
    for line_id in sequence.order:
        alive[grid.line_index[line_id]] = False
        targeted.append(line_id)
        if not molloy_reed_has_giant(grid.degrees(alive)):
            break
    _components, injections = balanced_injections(grid, alive)
    served = total_power_served(grid, injections)
    return AttackRunResult(
        seed=int(seed),
        collapse_round=len(targeted),
        targeted=tuple(targeted),
        cascade_sizes=(0,) * len(targeted),
        power_lost_fraction=_lost_fraction(initial_served, served),
        surviving_line_fraction=float(np.count_nonzero(alive)) / grid.n_lines,
    )


def run_campaign(grid, profile, n_runs=None, master_seed=None, overload_rtol=None):
    """
    Monte-Carlo campaign: ``n_runs`` attacks with seeds derived from the master seed.

    Runs here are sequential; :mod:`gridstrain.tasking.experiment` spreads the same
    (profile, run index) units over a worker pool and reduces them in the same order.
    """
    n_runs = settings.N_RUNS if n_runs is None else n_runs
    master_seed = settings.MASTER_SEED if master_seed is None else master_seed
    if n_runs < 1:
        raise ParameterError("n_runs", n_runs, "n_runs >= 1")
    runs = []
    with ProgressReport(
        message=_("Attacking profile {}").format(profile.profile_id), code="attack", total=n_runs
    ) as progress:
        for run_index in progress.iter(range(n_runs)):
            runs.append(
                run_attack(grid, profile, derive_seed(master_seed, run_index), overload_rtol)
            )
    return AttackCampaignResult.from_runs(profile.profile_id, runs)

