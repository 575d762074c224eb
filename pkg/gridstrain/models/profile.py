from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class ProfileParameters:
    """
    Provenance of a line-limit profile.

    ``kind`` is ``proportional`` (alpha only), ``redistributed`` (alpha, p, f, q, direction) or
    ``real`` (limits read from the grid file). ``p_label``/``q_label`` keep the symbolic ``1/V``
    form for ids and reports; ``p``/``q`` are the resolved fractions.
    """

    kind: str
    alpha: Optional[float] = None
    p: Optional[float] = None
    f: Optional[float] = None
    q: Optional[float] = None
    direction: Optional[str] = None
    p_label: Optional[str] = None
    q_label: Optional[str] = None

    def as_dict(self):
        record = {"kind": self.kind, "alpha": self.alpha}
        if self.kind == "redistributed":
            record.update(
                {
                    "p": self.p,
                    "p_label": self.p_label,
                    "f": self.f,
                    "q": self.q,
                    "q_label": self.q_label,
                    "direction": self.direction,
                    "alloc": "proportional",
                }
            )
        return record


@dataclass(frozen=True)
class LineLimitProfile:
    """
    A per-line capacity vector (MW), ordered like the grid's lines.
    """

    profile_id: str
    capacities: Tuple[float, ...]
    parameters: ProfileParameters

    def __post_init__(self):
        object.__setattr__(self, "capacities", tuple(float(c) for c in self.capacities))

    @cached_property
    def array(self):
        values = np.array(self.capacities, dtype=float)
        values.flags.writeable = False
        return values

    @property
    def is_proportional(self):
        return self.parameters.kind == "proportional"

    def total_capacity(self):
        return float(np.sum(self.array))

    def as_record(self, grid):
        """JSONL record: id, parameters and the capacity vector keyed by line id."""
        return {
            "profile_id": self.profile_id,
            "parameters": self.parameters.as_dict(),
            "capacities": dict(zip(grid.line_ids, self.capacities)),
        }
