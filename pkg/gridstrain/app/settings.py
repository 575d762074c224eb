"""
Settings for gridstrain.

Import ``settings`` from this module; it is a dynaconf object, so every value below can be
overridden with a ``GRIDSTRAIN_``-prefixed environment variable (``GRIDSTRAIN_WORKERS=4``) or from a
settings file named by ``GRIDSTRAIN_SETTINGS`` or the ``--config`` command-line flag.

The module constants below are the defaults and the full list of settings.
"""

from contextlib import contextmanager

from dynaconf import Dynaconf, Validator

from gridstrain import constants

# Zero-flow lines get capacity alpha * ZERO_FLOW_FLOOR (MW) so they are not born failed.
ZERO_FLOW_FLOOR = 1e-6

# Relative slack when comparing |flow| against capacity; keeps alpha == 1 lines from tripping on
# rounding noise.
OVERLOAD_RTOL = 1e-9

# Spring stiffness parametrization k = K_RANGE * (1 - 1 / alpha) + K_MIN
K_MIN = 100.0
K_RANGE = 1000.0

# Damped relaxation of the spring system
SOLVER_DT_FACTOR = 0.01
SOLVER_DRAG_FACTOR = 2.0
SOLVER_TOLERANCE_FACTOR = 1e-6
SOLVER_MAX_ITERATIONS = 1_000_000
SOLVER_MAX_RESTARTS = 8
SOLVER_DIVERGENCE_WINDOW = 10_000
SOLVER_DIVERGENCE_GROWTH = 10.0

# Penalized spline regression and cross-validation
SPLINE_KNOTS = 20
SPLINE_LAMBDA_MIN_EXP = -6
SPLINE_LAMBDA_MAX_EXP = 6
SPLINE_LAMBDA_COUNT = 25
SPLINE_MIN_POINTS = 10
CV_REPEATS = 10
CV_FOLDS = 10
CV_MIN_POINTS = 20

# Variogram fitting
VARIOGRAM_BINS = 15
VARIOGRAM_CUTOFF_FRACTION = 0.5
VARIOGRAM_MIN_POINTS = 5

# Experiments
WORKERS = 1
MASTER_SEED = 0
N_RUNS = 100
ALPHA_SET = list(constants.DEFAULT_ALPHA_SET)
P_SET = list(constants.DEFAULT_P_SET)
F_SET = list(constants.DEFAULT_F_SET)
Q_SET = list(constants.DEFAULT_Q_SET)
INCLUDE_PROPORTIONAL = False
SAVE_EMBEDDINGS = False

LOG_LEVEL = "INFO"

# https://docs.python.org/3/library/logging.config.html
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "simple": {"format": "gridstrain [%(experiment_id)s]: %(name)s:%(levelname)s: %(message)s"}
    },
    "filters": {"experiment_id": {"()": "gridstrain.app.loggers.ExperimentIdFilter"}},
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "simple",
            "filters": ["experiment_id"],
        }
    },
    "loggers": {
        "": {
            # The root logger
            "handlers": ["console"],
            "level": "INFO",
        },
    },
}

DEFAULTS = {name: value for name, value in globals().items() if name.isupper()}


def _valid_fraction(value, low_open):
    if value == constants.INVERSE_V:
        return True
    try:
        value = float(value)
    except (TypeError, ValueError):
        return False
    if low_open:
        return 0.0 < value <= 1.0
    return 0.0 < value < 1.0


# Validators
k_min_validator = Validator(
    "K_MIN",
    gt=0,
    messages={"operations": "K_MIN must be strictly positive, currently it is '{value}'"},
)
k_range_validator = Validator(
    "K_RANGE",
    gte=0,
    messages={"operations": "K_RANGE must not be negative, currently it is '{value}'"},
)
workers_validator = Validator("WORKERS", gte=1, is_type_of=int)
n_runs_validator = Validator("N_RUNS", gte=1, is_type_of=int)
cv_validator = Validator("CV_FOLDS", gte=2) & Validator("CV_REPEATS", gte=1)
cv_validator.messages["combined"] = "Cross-validation needs CV_FOLDS >= 2 and CV_REPEATS >= 1."

alpha_set_validator = Validator(
    "ALPHA_SET",
    condition=lambda x: len(x) > 0 and all(float(a) >= 1.0 for a in x),
    messages={"condition": "ALPHA_SET must be a nonempty list of values >= 1, got '{value}'"},
)
f_set_validator = Validator(
    "F_SET",
    condition=lambda x: len(x) > 0
    and all(_valid_fraction(f, low_open=False) and f != constants.INVERSE_V for f in x),
    messages={"condition": "F_SET values must lie strictly between 0 and 1, got '{value}'"},
)
pq_set_validator = Validator(
    "P_SET",
    "Q_SET",
    condition=lambda x: len(x) > 0 and all(_valid_fraction(v, low_open=True) for v in x),
    messages={
        "condition": (
            "P_SET and Q_SET values must lie in (0, 1] or be the symbol '1/V', got '{value}'"
        )
    },
)

VALIDATORS = [
    k_min_validator,
    k_range_validator,
    workers_validator,
    n_runs_validator,
    cv_validator,
    alpha_set_validator,
    f_set_validator,
    pq_set_validator,
]


def build_settings(**overrides):
    """
    Build a fresh settings object.

    Module defaults are the lowest layer, then the settings file named by ``GRIDSTRAIN_SETTINGS``,
    then ``GRIDSTRAIN_*`` environment variables, then ``overrides``.

    Args:
        overrides: setting names and values that win over every other source.

    Returns:
        dynaconf.LazySettings: the unvalidated settings object. Call
        ``settings.validators.validate()`` to check it.
    """
    lazy = Dynaconf(
        envvar_prefix="GRIDSTRAIN",
        envvar="GRIDSTRAIN_SETTINGS",
        load_dotenv=False,
        validators=VALIDATORS,
        **DEFAULTS,
    )
    for name, value in overrides.items():
        lazy.set(name, value)
    return lazy


def load_config_file(lazy, path):
    """
    Layer a settings file over ``lazy`` and re-run the validators.

    Args:
        lazy (dynaconf.LazySettings): settings to update in place.
        path (str): a TOML/YAML/INI/JSON file dynaconf can read.
    """
    lazy.load_file(path=str(path))
    lazy.validators.validate()
    return lazy


@contextmanager
def override_settings(overrides, lazy=None):
    """
    Apply ``overrides`` for the duration of the block, then restore the previous values.

    Args:
        overrides (dict): setting names (any case) and values.
        lazy (dynaconf.LazySettings): settings to change, the module ``settings`` by default.

    Raises:
        dynaconf.validator.ValidationError: the overridden settings are invalid. Nothing stays
            changed.
    """
    lazy = settings if lazy is None else lazy
    overrides = {name.upper(): value for name, value in overrides.items()}
    previous = {name: lazy.get(name) for name in overrides}
    try:
        for name, value in overrides.items():
            lazy.set(name, value)
        if overrides:
            lazy.validators.validate()
        yield lazy
    finally:
        for name, value in previous.items():
            lazy.set(name, value)


settings = build_settings()
# HERE ENDS DYNACONF SETUP (No more code below this line)
