"""
Strain Elevation Tension Spring embedding.

Each bus is a unit mass pushed up or down by its normalized net power; each line is a spring whose
stiffness grows with the line's tolerance. Relaxing the system to mechanical equilibrium gives
node elevations, line strains and line tensions, which summarize how hard the grid is pulling
against its own limits.
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional
from gettext import gettext as _

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.stats import spearmanr

from gridstrain.app.settings import settings
from gridstrain.app.util import write_csv, write_json
from gridstrain.constants import DECISION_FLAGS
from gridstrain.exceptions import ConvergenceError, ParameterError
from gridstrain.models import SetseEmbedding, SpringSystem
from gridstrain.profiles import edge_alpha

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """
    Relaxation constants. ``dt``, ``drag`` and ``tolerance`` are derived from the system unless
    given explicitly.
    """

    dt_factor: float = 0.01
    drag_factor: float = 2.0
    tolerance_factor: float = 1e-6
    max_iterations: int = 1_000_000
    max_restarts: int = 8
    divergence_window: int = 10_000
    divergence_growth: float = 10.0
    dt: Optional[float] = None
    drag: Optional[float] = None
    tolerance: Optional[float] = None

    @classmethod
    def from_settings(cls, lazy=None, **overrides):
        lazy = settings if lazy is None else lazy
        values = dict(
            dt_factor=lazy.SOLVER_DT_FACTOR,
            drag_factor=lazy.SOLVER_DRAG_FACTOR,
            tolerance_factor=lazy.SOLVER_TOLERANCE_FACTOR,
            max_iterations=lazy.SOLVER_MAX_ITERATIONS,
            max_restarts=lazy.SOLVER_MAX_RESTARTS,
            divergence_window=lazy.SOLVER_DIVERGENCE_WINDOW,
            divergence_growth=lazy.SOLVER_DIVERGENCE_GROWTH,
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def stiffness_from_alpha(alpha, k_min=None, k_range=None):
    """
    ``k = k_range * (1 - 1/alpha) + k_min``; works on scalars and arrays.

    Raises:
        ParameterError: alpha < 1, k_min <= 0 or k_range < 0.
    """
    k_min = settings.K_MIN if k_min is None else k_min
    k_range = settings.K_RANGE if k_range is None else k_range
    if not k_min > 0:
        raise ParameterError("k_min", k_min, "k_min > 0")
    if not k_range >= 0:
        raise ParameterError("k_range", k_range, "k_range >= 0")
    alpha = np.asarray(alpha, dtype=float)
    if np.any(~(alpha >= 1)):
        raise ParameterError("alpha", float(np.min(alpha)), "alpha >= 1")
    stiffness = k_range * (1.0 - 1.0 / alpha) + k_min
    return float(stiffness) if stiffness.ndim == 0 else stiffness


def _components(n_nodes, src, dst):
    adjacency = csr_matrix((np.ones(len(src)), (src, dst)), shape=(n_nodes, n_nodes))
    return connected_components(adjacency, directed=False)[1]


def normalized_forces(values, labels):
    """
    ``F = 2 G / ||G||_2`` within each component, then mean-centred per component.
    """
    values = np.asarray(values, dtype=float)
    forces = np.zeros_like(values)
    for label in np.unique(labels):
        members = labels == label
        norm = np.linalg.norm(values[members])
        if norm > 0:
            component = 2.0 * values[members] / norm
            forces[members] = component - component.mean()
    return forces


def forces_from_injections(grid):
    """
    Per-bus vertical force from generation minus demand, normalized per connected component.
    """
    labels = _components(grid.n_buses, grid.from_index, grid.to_index)
    return normalized_forces(grid.net_injection(), labels)


def net_forces(forces, stiffness, lengths, incidence, elevation):
    """
    Vertical force on every node: its own force plus the vertical pull of every attached spring,
    ``F_i + sum_j T_ij (z_j - z_i) / L_ij``.
    """
    dz = incidence @ elevation
    length = np.sqrt(lengths * lengths + dz * dz)
    pull = stiffness * (length - lengths) / length
    return forces - incidence.T @ (pull * dz)


def _relax(forces, stiffness, lengths, incidence, z, v, dt, drag, tolerance, config):
    """
    Semi-implicit Euler with unit mass and linear drag.

    Returns:
        (str, numpy.ndarray, int, float): outcome (``converged``, ``diverged`` or ``exhausted``),
        elevations, iterations used and the best residual seen.
    """
    best = math.inf
    checkpoint = None
    for iteration in range(config.max_iterations + 1):
        net = net_forces(forces, stiffness, lengths, incidence, z)
        residual = float(np.sum(np.abs(net)))
        if not math.isfinite(residual):
            return "diverged", z, iteration, best
        best = min(best, residual)
        if residual <= tolerance:
            return "converged", z, iteration, residual
        if iteration % config.divergence_window == 0:
            if checkpoint is not None and residual > config.divergence_growth * checkpoint:
                return "diverged", z, iteration, best
            checkpoint = residual
        if iteration == config.max_iterations:
            break
        v = v + dt * (net - drag * v)
        z = z + dt * v
    return "exhausted", z, config.max_iterations, best


def _solve_component(system, nodes, edges, config, profile_id):
    local = np.full(system.n_nodes, -1, dtype=np.intp)
    local[nodes] = np.arange(len(nodes))
    forces = system.forces[nodes]
    z0 = system.elevation[nodes].astype(float)
    v0 = system.velocity[nodes].astype(float)
    record = {"iterations": 0, "residual": 0.0, "restarts": 0}
    total_force = float(np.sum(np.abs(forces)))
    if not len(edges) or total_force == 0:
        return np.zeros(len(nodes)), dict(record, tolerance=0.0)

    stiffness = system.stiffness[edges]
    lengths = system.lengths[edges]
    rows = np.arange(len(edges))
    incidence = csr_matrix(
        (
            np.concatenate([np.ones(len(edges)), -np.ones(len(edges))]),
            (
                np.concatenate([rows, rows]),
                np.concatenate([local[system.src[edges]], local[system.dst[edges]]]),
            ),
        ),
        shape=(len(edges), len(nodes)),
    )
    k_max = float(np.max(stiffness))
    dt = config.dt if config.dt is not None else config.dt_factor * math.sqrt(1.0 / k_max)
    drag = config.drag if config.drag is not None else config.drag_factor * math.sqrt(k_max)
    tolerance = (
        config.tolerance if config.tolerance is not None else config.tolerance_factor * total_force
    )
    best = math.inf
    iterations = 0
    for restart in range(config.max_restarts + 1):
        outcome, z, used, residual = _relax(
            forces, stiffness, lengths, incidence, z0, v0, dt, drag, tolerance, config
        )
        iterations += used
        best = min(best, residual)
        if outcome == "converged":
            return z - z.mean(), {
                "iterations": iterations,
                "residual": residual,
                "restarts": restart,
                "tolerance": tolerance,
                "dt": dt,
                "drag": drag,
            }
        if outcome == "exhausted":
            break
        _logger.warning(
            _("Relaxation diverged after %(used)d steps, halving the timestep to %(dt)g"),
            {"used": used, "dt": dt / 2},
        )
        dt /= 2
    raise ConvergenceError(best, tolerance, iterations, profile_id=profile_id)


def solve_equilibrium(
    system, node_ids=None, edge_ids=None, config=None, profile_id=None, extra_record=None
):
    """
    Relax a spring system to equilibrium, one connected component at a time.

    Args:
        system (SpringSystem): forces (balanced per component), stiffness and lengths.
        node_ids (tuple): names for the nodes, defaults to their indices.
        edge_ids (tuple): names for the edges, defaults to their indices.
        config (SolverConfig): solver constants, defaults to the settings.
        profile_id (str): carried into a :class:`ConvergenceError`.

    Returns:
        SetseEmbedding: mean-zero elevations per component, strains and tensions.

    Raises:
        ConvergenceError: a component missed its tolerance after every restart.
    """
    config = SolverConfig.from_settings() if config is None else config
    if np.any(system.stiffness <= 0) or np.any(system.lengths <= 0):
        raise ParameterError("system", None, _("positive stiffness and natural lengths"))
    src = np.asarray(system.src, dtype=np.intp)
    dst = np.asarray(system.dst, dtype=np.intp)
    labels = _components(system.n_nodes, src, dst)
    edge_labels = labels[src]

    elevation = np.zeros(system.n_nodes)
    components = []
    for label in np.unique(labels):
        nodes = np.flatnonzero(labels == label)
        edges = np.flatnonzero(edge_labels == label)
        z, record = _solve_component(system, nodes, edges, config, profile_id)
        elevation[nodes] = z
        components.append(record)

    dz = elevation[src] - elevation[dst]
    length = np.sqrt(system.lengths ** 2 + dz ** 2)
    stretch = length - system.lengths
    convergence = {
        "iterations": int(sum(c["iterations"] for c in components)),
        "residual": float(sum(c["residual"] for c in components)),
        "tolerance": float(sum(c["tolerance"] for c in components)),
        "restarts": int(max(c["restarts"] for c in components)),
        "components": components,
        "force_normalization": DECISION_FLAGS["force_normalization"],
        "solver": asdict(config),
    }
    convergence.update(extra_record or {})
    return SetseEmbedding(
        node_ids=tuple(node_ids) if node_ids is not None else tuple(range(system.n_nodes)),
        edge_ids=tuple(edge_ids) if edge_ids is not None else tuple(range(system.n_edges)),
        elevation=elevation,
        strain=stretch / system.lengths,
        tension=system.stiffness * stretch,
        convergence=convergence,
    )


def spring_system(grid, profile, base_flow, k_min=None, k_range=None):
    """
    The spring system of a grid under a profile: unit lengths, stiffness from per-line alpha.
    """
    return SpringSystem(
        forces=forces_from_injections(grid),
        stiffness=stiffness_from_alpha(edge_alpha(profile, base_flow), k_min, k_range),
        src=grid.from_index,
        dst=grid.to_index,
    )


def embed_grid(grid, profile, base_flow, k_min=None, k_range=None, config=None):
    """
    Embed a grid under a line-limit profile.

    Raises:
        ConvergenceError: carries the profile id.
    """
    system = spring_system(grid, profile, base_flow, k_min, k_range)
    embedding = solve_equilibrium(
        system,
        node_ids=grid.bus_ids,
        edge_ids=grid.line_ids,
        config=config,
        profile_id=profile.profile_id,
        extra_record={
            "k_min": settings.K_MIN if k_min is None else k_min,
            "k_range": settings.K_RANGE if k_range is None else k_range,
        },
    )
    _logger.debug(
        _("Embedded %(profile)s in %(iterations)d iterations"),
        {"profile": profile.profile_id, "iterations": embedding.convergence["iterations"]},
    )
    return embedding


def stiffness_sensitivity(grid, profiles, base_flow, first, second, config=None):
    """
    Rank agreement of mean tension across profiles under two stiffness parametrizations.

    Args:
        first (tuple): ``(k_min, k_range)`` of the first parametrization.
        second (tuple): ``(k_min, k_range)`` of the second one.

    Returns:
        dict: Spearman ``rho`` and ``pvalue`` plus both mean-tension series, keyed by profile id.
    """
    series = []
    for k_min, k_range in (first, second):
        series.append(
            [
                float(np.mean(embed_grid(grid, p, base_flow, k_min, k_range, config).tension))
                for p in profiles
            ]
        )
    if len(profiles) < 2:
        rho, pvalue = math.nan, math.nan
    else:
        rho, pvalue = spearmanr(series[0], series[1])
    ids = [p.profile_id for p in profiles]
    return {
        "rho": float(rho),
        "pvalue": float(pvalue),
        "first": {"k_min": first[0], "k_range": first[1], "tension": dict(zip(ids, series[0]))},
        "second": {"k_min": second[0], "k_range": second[1], "tension": dict(zip(ids, series[1]))},
    }


def write_embedding_json(path, embedding, manifest_id=""):
    write_json(path, embedding.as_record(), manifest_id=manifest_id)


def write_embedding_csv(path, embedding, manifest_id=""):
    """
    Long-format CSV for plotting: one row per node elevation and one per edge strain/tension.
    """
    rows = [
        {"element": "node", "id": node_id, "elevation": float(z)}
        for node_id, z in zip(embedding.node_ids, embedding.elevation)
    ]
    rows.extend(
        {"element": "edge", "id": edge_id, "strain": float(s), "tension": float(t)}
        for edge_id, s, t in zip(embedding.edge_ids, embedding.strain, embedding.tension)
    )
    write_csv(path, ["element", "id", "elevation", "strain", "tension"], rows, manifest_id)
