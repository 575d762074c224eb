"""
Small grids with flows that can be worked out by hand.
"""
from gridstrain.models import Bus, Line, PowerGrid
from gridstrain.tasking.experiment import GridSource


def two_bus_grid(generation=10.0, demand=10.0, capacity=None):
    """``A`` feeds ``B`` over one line ``L``."""
    return PowerGrid(
        name="two-bus",
        buses=(Bus("A", 0.0, 0.0, generation=generation), Bus("B", 1.0, 0.0, demand=demand)),
        lines=(Line("L", "A", "B", 1.0, capacity),),
    )


def two_path_grid():
    """
    Bus 1 supplies 100 MW to bus 4 over two identical two-line paths, 1-2-4 (``a``, ``b``) and
    1-3-4 (``c``, ``d``); 50 MW flows on each line.
    """
    return PowerGrid(
        name="two-path",
        buses=(
            Bus("1", 0.0, 0.0, generation=100.0),
            Bus("2", 1.0, 1.0),
            Bus("3", 1.0, -1.0),
            Bus("4", 2.0, 0.0, demand=100.0),
        ),
        lines=(
            Line("a", "1", "2", 1.0),
            Line("b", "2", "4", 1.0),
            Line("c", "1", "3", 1.0),
            Line("d", "3", "4", 1.0),
        ),
    )


def bridged_grid():
    """Two supplied pairs, ``1-2`` and ``3-4``, joined by the bridge ``y`` between 2 and 3."""
    return PowerGrid(
        name="bridged",
        buses=(
            Bus("1", 0.0, 0.0, generation=50.0),
            Bus("2", 1.0, 0.0, demand=30.0),
            Bus("3", 2.0, 0.0, generation=40.0),
            Bus("4", 3.0, 0.0, demand=20.0),
        ),
        lines=(
            Line("x", "1", "2", 1.0),
            Line("y", "2", "3", 1.0),
            Line("z", "3", "4", 1.0),
        ),
    )


def star_grid(demands=(10.0, 20.0, 30.0), ids=None):
    """
    A generator hub ``g`` with one radial line per load; line flows equal the demands.
    """
    ids = ids or ["L{}".format(i + 1) for i in range(len(demands))]
    loads = tuple(
        Bus("n{}".format(i + 1), float(i + 1), 1.0, demand=d) for i, d in enumerate(demands)
    )
    return PowerGrid(
        name="star",
        buses=(Bus("g", 0.0, 0.0, generation=float(sum(demands))),) + loads,
        lines=tuple(Line(line_id, "g", bus.id, 1.0) for line_id, bus in zip(ids, loads)),
    )


def builtin_grid(name):
    return GridSource("builtin:{}".format(name)).load()
