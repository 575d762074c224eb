"""
Value types produced by the simulation modules.
"""
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np


@dataclass(frozen=True, eq=False)
class InjectionVector:
    """
    Net power per bus (MW), after any island rebalancing.
    """

    bus_ids: Tuple[str, ...]
    values: np.ndarray

    def as_dict(self):
        return dict(zip(self.bus_ids, (float(v) for v in self.values)))


@dataclass(frozen=True, eq=False)
class FlowSolution:
    """
    Signed line flows (MW, positive from ``from_bus`` to ``to_bus``) for one grid state.

    Attributes:
        flows: per-line flow in grid line order; removed lines carry 0.
        injections: the balanced per-bus injections the flows were solved for.
        islands: bus index tuples, one per connected island.
        slack_buses: slack bus id per island (``None`` for dead islands).
        residuals: per-island Kirchhoff residual, max over buses of |A^T f - p|.
    """

    flows: np.ndarray
    injections: np.ndarray
    islands: Tuple[Tuple[int, ...], ...]
    slack_buses: Tuple[Optional[str], ...]
    residuals: Tuple[float, ...]

    def as_dict(self, grid):
        return dict(zip(grid.line_ids, (float(f) for f in self.flows)))


@dataclass(frozen=True, eq=False)
class SpringSystem:
    """
    Vertical spring network: node forces, edge stiffness and natural horizontal lengths.

    ``src``/``dst`` are node indices of each edge. ``elevation`` and ``velocity`` are the state the
    relaxation starts from (flat and at rest by default).
    """

    forces: np.ndarray
    stiffness: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    lengths: Optional[np.ndarray] = None
    elevation: Optional[np.ndarray] = None
    velocity: Optional[np.ndarray] = None

    def __post_init__(self):
        n_nodes = len(self.forces)
        n_edges = len(self.stiffness)
        if self.lengths is None:
            object.__setattr__(self, "lengths", np.ones(n_edges))
        if self.elevation is None:
            object.__setattr__(self, "elevation", np.zeros(n_nodes))
        if self.velocity is None:
            object.__setattr__(self, "velocity", np.zeros(n_nodes))

    @property
    def n_nodes(self):
        return len(self.forces)

    @property
    def n_edges(self):
        return len(self.stiffness)


@dataclass(frozen=True, eq=False)
class SetseEmbedding:
    """
    Equilibrium of a spring system: node elevations, edge strains and edge tensions.

    ``convergence`` records iterations, final residual, tolerance, timestep, drag, restarts and
    the force normalization used.
    """

    node_ids: Tuple[str, ...]
    edge_ids: Tuple[str, ...]
    elevation: np.ndarray
    strain: np.ndarray
    tension: np.ndarray
    convergence: Dict = field(default_factory=dict)

    def as_record(self):
        return {
            "nodes": [
                {"id": node_id, "elevation": float(z)}
                for node_id, z in zip(self.node_ids, self.elevation)
            ],
            "edges": [
                {"id": edge_id, "strain": float(s), "tension": float(t)}
                for edge_id, s, t in zip(self.edge_ids, self.strain, self.tension)
            ],
            "convergence": dict(self.convergence),
        }


@dataclass(frozen=True)
class AttackSequence:
    """
    The fixed order in which lines are targeted, drawn before the attack starts.
    """

    seed: int
    order: Tuple[str, ...]


@dataclass(frozen=True)
class AttackRunResult:
    """
    Outcome of attacking one profile to giant-component collapse with one seed.

    ``collapse_round`` is the round in which the Molloy-Reed criterion first fails, which equals
    the number of targeted removals performed. ``cascade_sizes[r]`` counts lines tripped in round
    ``r + 1`` on top of the targeted one.
    """

    seed: int
    collapse_round: int
    targeted: Tuple[str, ...]
    cascade_sizes: Tuple[int, ...]
    power_lost_fraction: float
    surviving_line_fraction: float

    def as_record(self):
        return {
            "seed": self.seed,
            "collapse_round": self.collapse_round,
            "cascade_sizes": list(self.cascade_sizes),
            "power_lost_fraction": self.power_lost_fraction,
            "surviving_line_fraction": self.surviving_line_fraction,
        }


@dataclass(frozen=True)
class AttackCampaignResult:
    """
    Monte-Carlo aggregate of the runs on one profile, ordered by run index.
    """

    profile_id: str
    runs: Tuple[AttackRunResult, ...]
    mean_collapse_round: float
    mean_power_lost: float
    min_power_lost: float
    max_power_lost: float

    @classmethod
    def from_runs(cls, profile_id, runs):
        runs = tuple(runs)
        rounds = np.array([run.collapse_round for run in runs], dtype=float)
        lost = np.array([run.power_lost_fraction for run in runs], dtype=float)
        return cls(
            profile_id=profile_id,
            runs=runs,
            mean_collapse_round=float(np.mean(rounds)),
            mean_power_lost=float(np.mean(lost)),
            min_power_lost=float(np.min(lost)),
            max_power_lost=float(np.max(lost)),
        )

    def as_record(self):
        return {
            "profile_id": self.profile_id,
            "n_runs": len(self.runs),
            "mean_collapse_round": self.mean_collapse_round,
            "mean_power_lost": self.mean_power_lost,
            "min_power_lost": self.min_power_lost,
            "max_power_lost": self.max_power_lost,
            "runs": [run.as_record() for run in self.runs],
        }


@dataclass(frozen=True)
class RobustnessSummary:
    """
    One network-level measure of one profile, raw and (once batch-normalized) as kappa.
    """

    network: str
    profile_id: str
    measure: str
    raw: float
    kappa: Optional[float] = None
    degenerate: bool = False

    def with_kappa(self, kappa, degenerate=False):
        return replace(self, kappa=kappa, degenerate=degenerate)
