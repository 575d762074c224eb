"""
Progress reporting for long-running loops.
"""
import logging
import time
from gettext import gettext as _

from gridstrain.constants import UNIT_STATES

_logger = logging.getLogger(__name__)

# number of ms between log lines when used as a context manager
BATCH_INTERVAL = 2000


class ProgressReport:
    """
    Progress of a single step of work which has a name and a state.

    A report is a context manager that provides automatic state transitions for the RUNNING,
    COMPLETED and FAILED states. The increment() method can be called in the loop as work is
    completed; while inside the context, log lines are rate limited to one every
    ``BATCH_INTERVAL`` milliseconds. Use it as follows:

        >>> with ProgressReport(message="Attacking profiles", code="attack", total=12) as pb:
        >>>     for profile in pb.iter(profiles):
        >>>         handle(profile)

    Reports write to the ``gridstrain.app.progress`` logger, so they end up on standard error with
    the experiment id of the surrounding :func:`~gridstrain.app.loggers.experiment_context`.

    Attributes:
        message (str): short message for the progress update, typically shown to the user.
        code (str): identifies the type of progress report.
        state (str): one of :data:`gridstrain.constants.UNIT_STATES`. Defaults to ``waiting``.
        total (int): the total count of items to be handled, if known.
        done (int): the count of items already processed.
    """

    def __init__(self, message, code, total=None, done=0, state=UNIT_STATES.WAITING):
        self.message = message
        self.code = code
        self.total = total
        self.done = done
        self.state = state
        self._using_context_manager = False
        self._last_save_time = None

    def save(self):
        now = time.monotonic()
        if self._using_context_manager and self._last_save_time is not None:
            if (now - self._last_save_time) * 1000 < BATCH_INTERVAL:
                return
        self._emit()
        self._last_save_time = now

    def _emit(self):
        if self.total:
            _logger.info(
                "%(message)s [%(code)s]: %(done)d/%(total)d %(state)s",
                {
                    "message": self.message,
                    "code": self.code,
                    "done": self.done,
                    "total": self.total,
                    "state": self.state,
                },
            )
        else:
            _logger.info(
                "%(message)s [%(code)s]: %(done)d %(state)s",
                {
                    "message": self.message,
                    "code": self.code,
                    "done": self.done,
                    "state": self.state,
                },
            )

    def __enter__(self):
        """
        Saves the progress report state as RUNNING
        """
        self.state = UNIT_STATES.RUNNING
        self.save()

        # Save needs occurs immediately so it is called before _using_context_manager is set
        self._using_context_manager = True
        return self

    def __exit__(self, type, value, traceback):
        """
        Update the progress report state to COMPLETED or FAILED.

        The exception is not suppressed.
        """
        self._using_context_manager = False
        if type is None:
            self.state = UNIT_STATES.COMPLETED
        else:
            self.state = UNIT_STATES.FAILED
        self.save()

    def increment(self):
        """
        Increment done count and save the progress report.
        """
        self.increase_by(1)

    def increase_by(self, count):
        self.done += count
        if self.total:
            if self.done > self.total:
                _logger.warning(_("Too many items processed for ProgressReport %s") % self.message)
        self.save()

    def iter(self, iter):
        """
        Iterate and automatically call increment().

        Args:
            iter (iterator): The iterator to loop through while incrementing

        Returns:
            generator of ``iter`` argument items
        """
        for x in iter:
            yield x
            self.increment()
