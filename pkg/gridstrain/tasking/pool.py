"""
A bounded worker pool for independent simulation units.

The coordinator hands the shared, read-only inputs (grid, base flow, profiles, setting overrides)
to each worker once through the pool initializer; work units then carry only indices. Results come
back in submission order, so the reduction does not depend on scheduling or on the worker count.
"""
import logging
import multiprocessing
from contextlib import ExitStack
from gettext import gettext as _

from gridstrain.app.loggers import experiment_context
from gridstrain.app.settings import override_settings, settings

_logger = logging.getLogger(__name__)

_shared = {}


def shared():
    """The inputs installed in this process by the pool initializer."""
    return _shared


def install(payload):
    """
    Pool initializer: apply the setting overrides and keep the shared inputs for the units.
    """
    for name, value in payload.get("settings", {}).items():
        settings.set(name, value)
    _shared.clear()
    _shared.update(payload)


def _call(packed):
    func, unit = packed
    with experiment_context(_shared.get("experiment_id", "-")):
        return func(unit)


class WorkerPool:
    """
    Context manager running units in-process (``workers == 1``) or on a ``multiprocessing`` pool.

        >>> with WorkerPool(workers=4, payload={"grid": grid}) as pool:
        >>>     for result in pool.imap(attack_unit, units):
        >>>         handle(result)

    Attributes:
        workers (int): number of worker processes; 1 means no subprocess at all.
        payload (dict): shared inputs, installed once per worker.
    """

    def __init__(self, workers, payload):
        if workers < 1:
            raise ValueError(_("workers must be >= 1"))
        self.workers = workers
        self.payload = payload
        self._pool = None
        self._previous = None
        self._stack = None

    def __enter__(self):
        if self.workers == 1:
            self._previous = dict(_shared)
            self._stack = ExitStack()
            self._stack.enter_context(override_settings(self.payload.get("settings", {})))
            _shared.clear()
            _shared.update(self.payload)
        else:
            _logger.info(_("Starting %d workers"), self.workers)
            self._pool = multiprocessing.Pool(
                processes=self.workers, initializer=install, initargs=(self.payload,)
            )
        return self

    def imap(self, func, units, chunksize=1):
        """
        Apply ``func`` to every unit; results are yielded in unit order.
        """
        packed = ((func, unit) for unit in units)
        if self._pool is None:
            return map(_call, packed)
        return self._pool.imap(_call, packed, chunksize=chunksize)

    def __exit__(self, exc_type, exc_value, traceback):
        if self._pool is not None:
            if exc_type is None:
                self._pool.close()
            else:
                self._pool.terminate()
            self._pool.join()
            self._pool = None
        else:
            _shared.clear()
            _shared.update(self._previous or {})
            self._stack.close()
            self._stack = None
