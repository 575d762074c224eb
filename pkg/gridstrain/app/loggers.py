import contextlib
import contextvars
import copy
import logging
import logging.config

_experiment_id = contextvars.ContextVar("experiment_id", default="-")


class ExperimentIdFilter(logging.Filter):
    """
    Stamp every record with the id of the experiment currently being run.

    The id lives in a context variable, so worker processes and nested commands see the value set
    by :func:`experiment_context` in their own context only.
    """

    def filter(self, record):
        record.experiment_id = _experiment_id.get()
        return True


@contextlib.contextmanager
def experiment_context(experiment_id):
    """
    Context manager that tags log records emitted inside it with ``experiment_id``.
    """
    token = _experiment_id.set(experiment_id)
    try:
        yield
    finally:
        _experiment_id.reset(token)


def current_experiment_id():
    return _experiment_id.get()


def configure_logging(lazy_settings, level=None):
    """
    Apply the ``LOGGING`` dictConfig from settings.

    Args:
        lazy_settings (dynaconf.LazySettings): settings carrying ``LOGGING`` and ``LOG_LEVEL``.
        level (str): optional level that wins over ``LOG_LEVEL`` (the ``--verbose`` flag).
    """
    from gridstrain.app.settings import LOGGING

    config = copy.deepcopy(LOGGING)
    config["loggers"][""]["level"] = (level or lazy_settings.get("LOG_LEVEL", "INFO")).upper()
    logging.config.dictConfig(config)
