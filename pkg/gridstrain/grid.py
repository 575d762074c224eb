"""
Grid ingestion, serialization, statistics and component utilities.
"""
import csv
import json
import logging
import math
from dataclasses import dataclass, replace
from gettext import gettext as _
from pathlib import Path

import networkx as nx
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _csgraph_components

from gridstrain.constants import GRID_FORMATS
from gridstrain.exceptions import GridParseError, GridValidationError
from gridstrain.models import Bus, Line, PowerGrid

_logger = logging.getLogger(__name__)

NODE_FIELDS = ("id", "x", "y", "generation", "demand")
EDGE_FIELDS = ("id", "from", "to", "susceptance", "capacity")


def _number(value, path, record, name, optional=False):
    if value is None or (isinstance(value, str) and value.strip() == ""):
        if optional:
            return None
        raise GridParseError(path, _("missing field '{name}'").format(name=name), record)
    try:
        return float(value)
    except (TypeError, ValueError):
        raise GridParseError(
            path,
            _("field '{name}' is not a number: {value!r}").format(name=name, value=value),
            record,
        )


def _bus_from_record(raw, path, record):
    if not isinstance(raw, dict) or "id" not in raw:
        raise GridParseError(path, _("bus record must be an object with an 'id'"), record)
    return Bus(
        id=str(raw["id"]),
        x=_number(raw.get("x", 0.0), path, record, "x"),
        y=_number(raw.get("y", 0.0), path, record, "y"),
        generation=_number(raw.get("generation", 0.0), path, record, "generation"),
        demand=_number(raw.get("demand", 0.0), path, record, "demand"),
    )


def _line_from_record(raw, path, record):
    if not isinstance(raw, dict):
        raise GridParseError(path, _("line record must be an object"), record)
    for key in ("id", "from", "to"):
        if raw.get(key) in (None, ""):
            raise GridParseError(path, _("missing field '{name}'").format(name=key), record)
    return Line(
        id=str(raw["id"]),
        from_bus=str(raw["from"]),
        to_bus=str(raw["to"]),
        susceptance=_number(raw.get("susceptance"), path, record, "susceptance"),
        capacity=_number(raw.get("capacity"), path, record, "capacity", optional=True),
    )


def _validated(name, buses, lines, path):
    try:
        return PowerGrid(name=name, buses=tuple(buses), lines=tuple(lines))
    except GridValidationError as exc:
        _logger.error(_("Grid %(path)s failed validation: %(error)s"), {"path": path, "error": exc})
        raise


def _load_canonical_json(path):
    try:
        with open(path, encoding="utf8") as fp:
            document = json.load(fp)
    except json.JSONDecodeError as exc:
        raise GridParseError(path, exc.msg, "line {}".format(exc.lineno))
    except UnicodeDecodeError as exc:
        raise GridParseError(path, _("not UTF-8 text ({reason})").format(reason=exc.reason))
    except OSError as exc:
        raise GridParseError(path, exc.strerror or str(exc))
    if not isinstance(document, dict):
        raise GridParseError(path, _("top level must be an object"))
    for key in ("buses", "lines"):
        if not isinstance(document.get(key), list):
            raise GridParseError(path, _("'{key}' must be a list").format(key=key))
    buses = [
        _bus_from_record(raw, path, "buses[{}]".format(i))
        for i, raw in enumerate(document["buses"])
    ]
    lines = [
        _line_from_record(raw, path, "lines[{}]".format(i))
        for i, raw in enumerate(document["lines"])
    ]
    name = str(document.get("name") or Path(path).stem)
    return _validated(name, buses, lines, path)


def _read_csv(path, required):
    try:
        with open(path, newline="", encoding="utf8") as fp:
            reader = csv.DictReader(fp)
            missing = set(required) - set(reader.fieldnames or ())
            if missing:
                raise GridParseError(
                    path, _("missing columns {columns}").format(columns=sorted(missing))
                )
            # header is row 1
            return [(row_number, row) for row_number, row in enumerate(reader, start=2)]
    except csv.Error as exc:
        raise GridParseError(path, str(exc))
    except UnicodeDecodeError as exc:
        raise GridParseError(path, _("not UTF-8 text ({reason})").format(reason=exc.reason))
    except OSError as exc:
        raise GridParseError(path, exc.strerror or str(exc))


def _load_node_edge_csv(path):
    directory = Path(path)
    nodes_path, edges_path = directory / "nodes.csv", directory / "edges.csv"
    for required in (nodes_path, edges_path):
        if not required.exists():
            raise GridParseError(required, _("file not found"))
    buses = [
        _bus_from_record(row, nodes_path, "row {}".format(n))
        for n, row in _read_csv(nodes_path, NODE_FIELDS)
    ]
    lines = [
        _line_from_record(row, edges_path, "row {}".format(n))
        for n, row in _read_csv(edges_path, EDGE_FIELDS[:-1])
    ]
    return _validated(directory.name, buses, lines, path)


def load_grid(path, format=GRID_FORMATS.CANONICAL_JSON):
    """
    Load and validate a grid.

    Args:
        path (str): a canonical-json file, or a directory holding ``nodes.csv`` and ``edges.csv``
            for the node-edge-csv format.
        format (str): one of :data:`gridstrain.constants.GRID_FORMATS`.

    Returns:
        PowerGrid: the validated grid.

    Raises:
        GridParseError: the file is missing or malformed.
        GridValidationError: the grid breaks a structural invariant.
    """
    if format == GRID_FORMATS.CANONICAL_JSON:
        if not Path(path).is_file():
            raise GridParseError(path, _("file not found"))
        grid = _load_canonical_json(path)
    elif format == GRID_FORMATS.NODE_EDGE_CSV:
        grid = _load_node_edge_csv(path)
    else:
        raise GridParseError(path, _("unknown grid format '{format}'").format(format=format))
    _logger.debug(
        "Loaded grid %(name)s: %(buses)d buses, %(lines)d lines",
        {"name": grid.name, "buses": grid.n_buses, "lines": grid.n_lines},
    )
    return grid


def grid_to_document(grid):
    return {
        "name": grid.name,
        "buses": [
            {"id": b.id, "x": b.x, "y": b.y, "generation": b.generation, "demand": b.demand}
            for b in grid.buses
        ],
        "lines": [
            dict(
                {
                    "id": ln.id,
                    "from": ln.from_bus,
                    "to": ln.to_bus,
                    "susceptance": ln.susceptance,
                },
                **({"capacity": ln.capacity} if ln.capacity is not None else {}),
            )
            for ln in grid.lines
        ],
    }


def dump_grid(grid, path, format=GRID_FORMATS.CANONICAL_JSON):
    """
    Write ``grid`` so that :func:`load_grid` reads back an equal grid, field for field.
    """
    if format == GRID_FORMATS.CANONICAL_JSON:
        with open(path, "w", encoding="utf8") as fp:
            json.dump(grid_to_document(grid), fp, indent=2)
            fp.write("\n")
        return
    if format != GRID_FORMATS.NODE_EDGE_CSV:
        raise GridParseError(path, _("unknown grid format '{format}'").format(format=format))
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "nodes.csv", "w", newline="", encoding="utf8") as fp:
        writer = csv.writer(fp)
        writer.writerow(NODE_FIELDS)
        for b in grid.buses:
            writer.writerow([b.id, repr(b.x), repr(b.y), repr(b.generation), repr(b.demand)])
    with open(directory / "edges.csv", "w", newline="", encoding="utf8") as fp:
        writer = csv.writer(fp)
        writer.writerow(EDGE_FIELDS)
        for ln in grid.lines:
            capacity = "" if ln.capacity is None else repr(ln.capacity)
            writer.writerow([ln.id, ln.from_bus, ln.to_bus, repr(ln.susceptance), capacity])


def with_injections(grid, overrides):
    """
    Return a copy of ``grid`` with per-bus generation/demand replaced.

    Args:
        overrides (dict): bus id -> (generation, demand).
    """
    unknown = set(overrides) - set(grid.bus_index)
    if unknown:
        raise GridValidationError(
            _("overrides reference unknown buses {buses}").format(buses=sorted(unknown))
        )
    buses = tuple(
        replace(bus, generation=float(overrides[bus.id][0]), demand=float(overrides[bus.id][1]))
        if bus.id in overrides
        else bus
        for bus in grid.buses
    )
    return PowerGrid(name=grid.name, buses=buses, lines=grid.lines)


def with_capacities(grid, capacities):
    """
    Return a copy of ``grid`` whose lines carry ``capacities`` (sequence in line order).

    Raises:
        GridValidationError: the sequence length differs from the line count, or a capacity is
            not positive.
    """
    capacities = list(capacities)
    if len(capacities) != grid.n_lines:
        raise GridValidationError(
            _("{count} capacities for {lines} lines").format(
                count=len(capacities), lines=grid.n_lines
            )
        )
    lines = tuple(replace(line, capacity=float(c)) for line, c in zip(grid.lines, capacities))
    return PowerGrid(name=grid.name, buses=grid.buses, lines=lines)


def component_labels(grid, alive=None):
    """
    Label each bus with the index of its connected component over the alive lines.

    Labels are renumbered so that component ``k`` is the k-th component met when scanning buses in
    grid order, which keeps island numbering deterministic.

    Returns:
        (int, numpy.ndarray): number of components and per-bus labels.
    """
    src, dst = grid.from_index, grid.to_index
    if alive is not None:
        src, dst = src[alive], dst[alive]
    n = grid.n_buses
    adjacency = coo_matrix((np.ones(len(src)), (src, dst)), shape=(n, n))
    count, raw = _csgraph_components(adjacency, directed=False)
    remap = {}
    labels = np.empty(n, dtype=np.intp)
    for i, label in enumerate(raw):
        labels[i] = remap.setdefault(label, len(remap))
    return count, labels


def islands(grid, alive=None):
    """
    Bus index tuples of the connected components over the alive lines, in canonical order.
    """
    count, labels = component_labels(grid, alive)
    members = [[] for _label in range(count)]
    for i, label in enumerate(labels):
        members[label].append(i)
    return tuple(tuple(m) for m in members)


def connected_components(grid):
    """
    Partition the buses of ``grid`` into maximal connected components.

    Returns:
        list: lists of bus ids, ordered by the position of their first bus in the grid.
    """
    return [[grid.bus_ids[i] for i in island] for island in islands(grid)]


def simple_graph(grid):
    """Undirected simple projection of the grid (parallel lines collapsed)."""
    graph = nx.Graph()
    graph.add_nodes_from(grid.bus_ids)
    graph.add_edges_from((ln.from_bus, ln.to_bus) for ln in grid.lines)
    return graph


@dataclass(frozen=True)
class GridStatistics:
    """
    Topological summary of a grid, on its simple projection.

    ``mean_betweenness`` uses normalized betweenness (divided by (n-1)(n-2)/2); other tools
    may use a different convention. ``assortativity_defined`` is False when every
    node has the same degree, in which case ``assortativity`` is reported as 0.
    """

    name: str
    node_count: int
    edge_count: int
    mean_degree: float
    assortativity: float
    assortativity_defined: bool
    mean_clustering: float
    mean_distance: float
    mean_betweenness: float
    generator_count: int
    load_count: int
    net_load_count: int

    def as_dict(self):
        return dict(self.__dict__)


def _mean_reachable_distance(graph):
    total = 0
    pairs = 0
    for _source, lengths in nx.all_pairs_shortest_path_length(graph):
        total += sum(lengths.values())
        pairs += len(lengths) - 1
    return total / pairs if pairs else 0.0


def summary_statistics(grid):
    """
    Node/edge counts, degree, assortativity, clustering, distance, betweenness, generator and
    load counts.

    ``edge_count`` counts grid lines; everything else is computed on the simple graph. Distance
    is the mean over reachable ordered pairs, so disconnected grids are fine.
    """
    graph = simple_graph(grid)
    degrees = [d for _node, d in graph.degree()]
    if len(set(degrees)) > 1 and graph.number_of_edges() > 0:
        assortativity = float(nx.degree_assortativity_coefficient(graph))
        defined = math.isfinite(assortativity)
    else:
        defined = False
    if not defined:
        assortativity = 0.0
    n = grid.n_buses
    betweenness = nx.betweenness_centrality(graph, normalized=True)
    generation, demand = grid.generation, grid.demand
    return GridStatistics(
        name=grid.name,
        node_count=n,
        edge_count=grid.n_lines,
        mean_degree=float(np.mean(degrees)) if n else 0.0,
        assortativity=assortativity,
        assortativity_defined=defined,
        mean_clustering=float(nx.average_clustering(graph)),
        mean_distance=float(_mean_reachable_distance(graph)),
        mean_betweenness=float(np.mean(list(betweenness.values()))),
        generator_count=int(np.sum(generation > demand)),
        load_count=int(np.sum(demand > 0)),
        net_load_count=int(np.sum(demand > generation)),
    )
