from types import SimpleNamespace


#: Supported grid file formats.
GRID_FORMATS = SimpleNamespace(
    CANONICAL_JSON="canonical-json",
    NODE_EDGE_CSV="node-edge-csv",
)

#: Redistribution directions for excess capacity.
DIRECTIONS = SimpleNamespace(
    MOST_TO_LEAST="most_to_least",
    LEAST_TO_MOST="least_to_most",
)
DIRECTION_CHOICES = (DIRECTIONS.MOST_TO_LEAST, DIRECTIONS.LEAST_TO_MOST)

#: Network-level robustness measures, in report order.
MEASURES = SimpleNamespace(
    MEAN_ALPHA="mean_alpha",
    MEAN_LINE_LOAD="mean_line_load",
    MEAN_ABS_ELEVATION="mean_abs_elevation",
    MEAN_STRAIN="mean_strain",
    MEAN_TENSION="mean_tension",
)
MEASURE_CHOICES = (
    MEASURES.MEAN_ALPHA,
    MEASURES.MEAN_LINE_LOAD,
    MEASURES.MEAN_ABS_ELEVATION,
    MEASURES.MEAN_STRAIN,
    MEASURES.MEAN_TENSION,
)

#: Flags written next to every numeric artifact. They name the choices made where the
#: underlying method leaves the behaviour open.
DECISION_FLAGS = {
    "balance_rule": "proportional",
    "alloc": "proportional",
    "mr_population": "all_nodes",
    "force_normalization": "l2_component",
}

#: Symbolic fraction meaning "one over the number of buses".
INVERSE_V = "1/V"

#: Default parameter sets for the profile grid.
DEFAULT_ALPHA_SET = (1.005, 1.025, 1.1, 1.2, 1.5, 2, 3, 5, 7, 10, 20)
DEFAULT_P_SET = (INVERSE_V, 0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_F_SET = (0.25, 0.5, 0.75, 0.99)
DEFAULT_Q_SET = (INVERSE_V, 0.1, 0.2, 0.3, 0.4, 0.5)

#: States of a progress report.
UNIT_STATES = SimpleNamespace(
    WAITING="waiting",
    RUNNING="running",
    COMPLETED="completed",
    FAILED="failed",
)

#: 64-bit mask for the seed mixer.
MASK64 = (1 << 64) - 1
