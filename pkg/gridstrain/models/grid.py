"""
Immutable grid topology: buses, lines and the grid that ties them together.
"""
import math
from dataclasses import dataclass
from functools import cached_property
from gettext import gettext as _
from typing import Optional, Tuple

import numpy as np

from gridstrain.exceptions import GridValidationError


def _frozen(array):
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class Bus:
    """
    A node of the grid.

    Net injection is derived as ``generation - demand`` and never stored.
    """

    id: str
    x: float = 0.0
    y: float = 0.0
    generation: float = 0.0
    demand: float = 0.0

    @property
    def net_injection(self):
        return self.generation - self.demand

    def validate(self):
        if not isinstance(self.id, str) or not self.id:
            raise GridValidationError(_("bus id must be a nonempty string"), record=repr(self.id))
        for name in ("x", "y", "generation", "demand"):
            if not math.isfinite(getattr(self, name)):
                raise GridValidationError(
                    _("{name} must be finite").format(name=name), record="bus " + self.id
                )
        if self.generation < 0 or self.demand < 0:
            raise GridValidationError(
                _("generation and demand must be >= 0"), record="bus " + self.id
            )


@dataclass(frozen=True)
class Line:
    """
    A transmission line. ``capacity`` is optional at ingest; synthetic profiles supply it later.
    """

    id: str
    from_bus: str
    to_bus: str
    susceptance: float
    capacity: Optional[float] = None

    def validate(self):
        record = "line " + str(self.id)
        if not isinstance(self.id, str) or not self.id:
            raise GridValidationError(_("line id must be a nonempty string"), record=repr(self.id))
        if self.from_bus == self.to_bus:
            raise GridValidationError(_("self-loop on bus {bus}").format(bus=self.from_bus), record)
        if not math.isfinite(self.susceptance) or self.susceptance <= 0:
            raise GridValidationError(
                _("susceptance must be finite and > 0, got {value}").format(
                    value=self.susceptance
                ),
                record,
            )
        if self.capacity is not None and not (
            math.isfinite(self.capacity) and self.capacity > 0
        ):
            raise GridValidationError(
                _("capacity must be > 0 when present, got {value}").format(value=self.capacity),
                record,
            )


@dataclass(frozen=True)
class PowerGrid:
    """
    Bus/line topology with susceptances, injections and coordinates.

    A grid is validated on construction and never mutated afterwards, so one instance can be
    shared read-only by any number of simulation workers. Bus and line order is preserved exactly
    as given; every array below follows that order.
    """

    name: str
    buses: Tuple[Bus, ...]
    lines: Tuple[Line, ...]

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        if not self.buses:
            raise GridValidationError(_("grid has no buses"))
        seen = set()
        for bus in self.buses:
            bus.validate()
            if bus.id in seen:
                raise GridValidationError(_("duplicate bus id"), record="bus " + bus.id)
            seen.add(bus.id)
        line_ids = set()
        for line in self.lines:
            line.validate()
            if line.id in line_ids:
                raise GridValidationError(_("duplicate line id"), record="line " + line.id)
            line_ids.add(line.id)
            for endpoint in (line.from_bus, line.to_bus):
                if endpoint not in seen:
                    raise GridValidationError(
                        _("endpoint {bus} does not reference an existing bus").format(
                            bus=endpoint
                        ),
                        record="line " + line.id,
                    )

    @property
    def n_buses(self):
        return len(self.buses)

    @property
    def n_lines(self):
        return len(self.lines)

    @cached_property
    def bus_ids(self):
        return tuple(bus.id for bus in self.buses)

    @cached_property
    def line_ids(self):
        return tuple(line.id for line in self.lines)

    @cached_property
    def bus_index(self):
        return {bus_id: i for i, bus_id in enumerate(self.bus_ids)}

    @cached_property
    def line_index(self):
        return {line_id: i for i, line_id in enumerate(self.line_ids)}

    @cached_property
    def from_index(self):
        return _frozen(np.array([self.bus_index[ln.from_bus] for ln in self.lines], dtype=np.intp))

    @cached_property
    def to_index(self):
        return _frozen(np.array([self.bus_index[ln.to_bus] for ln in self.lines], dtype=np.intp))

    @cached_property
    def susceptance(self):
        return _frozen(np.array([ln.susceptance for ln in self.lines], dtype=float))

    @cached_property
    def generation(self):
        return _frozen(np.array([b.generation for b in self.buses], dtype=float))

    @cached_property
    def demand(self):
        return _frozen(np.array([b.demand for b in self.buses], dtype=float))

    @cached_property
    def coordinates(self):
        return _frozen(np.array([(b.x, b.y) for b in self.buses], dtype=float).reshape(-1, 2))

    @cached_property
    def capacities(self):
        """Ingested line limits; NaN where a line has none."""
        return _frozen(
            np.array(
                [np.nan if ln.capacity is None else ln.capacity for ln in self.lines], dtype=float
            )
        )

    @property
    def has_capacities(self):
        return all(line.capacity is not None for line in self.lines)

    def net_injection(self):
        """Per-bus generation minus demand, in bus order."""
        return self.generation - self.demand

    def degrees(self, alive=None):
        """
        Degree of every bus counting each alive line once (parallel lines count separately).

        Args:
            alive (numpy.ndarray): optional boolean mask over lines.
        """
        src, dst = self.from_index, self.to_index
        if alive is not None:
            src, dst = src[alive], dst[alive]
        return np.bincount(src, minlength=self.n_buses) + np.bincount(dst, minlength=self.n_buses)
