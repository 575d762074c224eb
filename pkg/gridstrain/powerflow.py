"""
DC power flow.

Flows solve ``f = C A (A^T C A)^-1 p`` per connected island, where ``A`` is the line-bus incidence
matrix (+1 at the ``from`` bus, -1 at the ``to`` bus), ``C`` the diagonal of line susceptances and
``p`` the balanced net injections. The slack bus column is removed before solving.
"""
import logging
from gettext import gettext as _

import numpy as np
import scipy.linalg
from scipy.sparse import csc_matrix, diags
from scipy.sparse.linalg import spsolve

from gridstrain import grid as grid_utils
from gridstrain.app.util import write_csv
from gridstrain.exceptions import SingularSystemError
from gridstrain.models import FlowSolution, InjectionVector

_logger = logging.getLogger(__name__)

# Islands up to this many buses are solved with a dense Cholesky factorization.
DENSE_SOLVE_LIMIT = 300


def _as_indices(grid, island):
    members = list(island)
    if members and isinstance(members[0], str):
        return np.array([grid.bus_index[bus_id] for bus_id in members], dtype=np.intp)
    return np.asarray(members, dtype=np.intp)


def _balanced(generation, demand):
    total_generation = generation.sum()
    total_demand = demand.sum()
    if total_generation <= 0 or total_demand <= 0:
        return np.zeros_like(generation)
    if total_generation > total_demand:
        return generation * (total_demand / total_generation) - demand
    if total_demand > total_generation:
        return generation - demand * (total_generation / total_demand)
    return generation - demand


def balance_island(grid, island):
    """
    Balance generation against demand on one island.

    The smaller aggregate side is kept and the larger side is scaled down proportionally, so the
    injections sum to zero. An island without generation or without demand is dead: every
    injection is 0.

    Args:
        grid (PowerGrid): the grid the island belongs to.
        island (iterable): bus ids or bus indices of a connected component.

    Returns:
        InjectionVector: net injections restricted to the island, in the order given.
    """
    index = _as_indices(grid, island)
    values = _balanced(grid.generation[index], grid.demand[index])
    return InjectionVector(bus_ids=tuple(grid.bus_ids[i] for i in index), values=values)


def balanced_injections(grid, alive=None, components=None):
    """
    Balance every island of the grid over the alive lines.

    Returns:
        (tuple, numpy.ndarray): the islands and the full-length per-bus injection vector.
    """
    if components is None:
        components = grid_utils.islands(grid, alive)
    injections = np.zeros(grid.n_buses)
    for island in components:
        index = np.asarray(island, dtype=np.intp)
        injections[index] = _balanced(grid.generation[index], grid.demand[index])
    return components, injections


def slack_bus(grid, island):
    """
    The island bus with the largest generation; ties go to the lexicographically smallest id.
    """
    return min(island, key=lambda i: (-grid.generation[i], grid.bus_ids[i]))


def _solve_reduced(matrix, rhs, island_id):
    if matrix.shape[0] <= DENSE_SOLVE_LIMIT:
        dense = matrix.toarray()
        try:
            factor = scipy.linalg.cho_factor(dense)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(island_id, str(exc))
        return scipy.linalg.cho_solve(factor, rhs)
    solution = spsolve(matrix.tocsc(), rhs)
    if not np.all(np.isfinite(solution)):
        raise SingularSystemError(island_id, _("sparse solve returned non-finite angles"))
    return solution


def solve_dc_flow(grid, injections, alive=None, components=None, slack=None):
    """
    Solve DC power flow island by island.

    Args:
        grid (PowerGrid): the grid.
        injections (InjectionVector | numpy.ndarray): balanced per-bus injections over all buses
            in grid order (see :func:`balanced_injections`).
        alive (numpy.ndarray): optional boolean mask of lines in service; removed lines carry 0.
        components (tuple): islands, if the caller already has them.
        slack (dict): optional island index -> bus index override of the slack choice.

    Returns:
        FlowSolution: flows, islands, slack buses and per-island Kirchhoff residuals.

    Raises:
        SingularSystemError: an island's reduced system could not be factorized.
    """
    p = np.asarray(getattr(injections, "values", injections), dtype=float)
    if len(p) != grid.n_buses:
        raise ValueError(_("injection vector must cover every bus"))
    alive = np.ones(grid.n_lines, dtype=bool) if alive is None else np.asarray(alive, dtype=bool)
    if not np.all(np.isfinite(grid.susceptance[alive])):
        raise SingularSystemError("*", _("non-finite susceptance"))
    if components is None:
        components = grid_utils.islands(grid, alive)

    flows = np.zeros(grid.n_lines)
    src, dst = grid.from_index, grid.to_index
    count, labels = len(components), np.empty(grid.n_buses, dtype=np.intp)
    for k, island in enumerate(components):
        labels[list(island)] = k
    line_island = np.where(alive, labels[src], -1)

    slack_ids = []
    residuals = []
    for k in range(count):
        island = np.asarray(components[k], dtype=np.intp)
        p_island = p[island]
        if len(island) < 2 or not np.any(p_island):
            slack_ids.append(None)
            residuals.append(float(np.max(np.abs(p_island))) if len(island) else 0.0)
            continue
        root = slack[k] if slack and k in slack else slack_bus(grid, island)
        slack_ids.append(grid.bus_ids[root])

        lines = np.flatnonzero(line_island == k)
        local = {bus: j for j, bus in enumerate(island)}
        rows = np.arange(len(lines))
        from_local = np.array([local[b] for b in src[lines]], dtype=np.intp)
        to_local = np.array([local[b] for b in dst[lines]], dtype=np.intp)
        incidence = csc_matrix(
            (
                np.concatenate([np.ones(len(lines)), -np.ones(len(lines))]),
                (np.concatenate([rows, rows]), np.concatenate([from_local, to_local])),
            ),
            shape=(len(lines), len(island)),
        )
        weighted = (incidence.T @ diags(grid.susceptance[lines]) @ incidence).tocsc()
        keep = np.array([j for j in range(len(island)) if island[j] != root], dtype=np.intp)
        reduced = weighted[keep][:, keep]
        theta = np.zeros(len(island))
        theta[keep] = _solve_reduced(reduced, p_island[keep], k)
        flows[lines] = grid.susceptance[lines] * (theta[from_local] - theta[to_local])

        balance = incidence.T @ flows[lines]
        residuals.append(float(np.max(np.abs(balance - p_island))))

    return FlowSolution(
        flows=flows,
        injections=p,
        islands=tuple(tuple(int(i) for i in island) for island in components),
        slack_buses=tuple(slack_ids),
        residuals=tuple(residuals),
    )


def solve_grid_flow(grid, alive=None):
    """
    Island, balance and solve in one call.
    """
    components, injections = balanced_injections(grid, alive)
    return solve_dc_flow(grid, injections, alive=alive, components=components)


def total_power_served(grid, injections):
    """
    Power actually delivered (MW): the positive side of the balanced injections.
    """
    p = np.asarray(getattr(injections, "values", injections), dtype=float)
    return float(np.sum(np.maximum(p, 0.0)))


def write_flow_csv(path, grid, solution, manifest_id=""):
    """
    Dump line flows as CSV: line id and flow (MW), stamped with the manifest id and decision flags.
    """
    rows = (
        {"line_id": line_id, "flow_mw": float(flow)}
        for line_id, flow in zip(grid.line_ids, solution.flows)
    )
    write_csv(path, ["line_id", "flow_mw"], rows, manifest_id=manifest_id)
