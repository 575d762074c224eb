from gettext import gettext as _


class GridStrainException(Exception):
    """
    Base exception class for gridstrain.
    """

    def __init__(self, error_code):
        """
        :param error_code: unique error code
        :type error_code: str
        """
        if not isinstance(error_code, str):
            raise TypeError(_("Error code must be an instance of str."))
        self.error_code = error_code

    def __str__(self):
        """
        Returns the string representation of the exception.

        Each concrete class that inherits from :class:`GridStrainException` is expected to
        implement its own __str__() method. The return value is what ends up in ``errors.jsonl``
        when a profile fails during an experiment.
        """
        raise NotImplementedError(
            "Subclasses of GridStrainException must implement a __str__() method"
        )


def exception_to_dict(exc, traceback=None):
    """
    Return a dictionary representation of an Exception.

    :param exc: Exception that is being serialized
    :type exc: Exception
    :param traceback: formatted traceback of the failure, as from ``traceback.format_tb``.
    :type traceback: str

    :return: dictionary representing the Exception
    :rtype: dict
    """
    return {
        "code": getattr(exc, "error_code", None),
        "type": type(exc).__name__,
        "description": str(exc),
        "traceback": traceback,
    }


class DegenerateDataError(GridStrainException):
    """
    Raised when a computation is undefined on the supplied data, e.g. a zero variance series, a
    constant truth vector or coincident sample locations.
    """

    def __init__(self, reason):
        super().__init__("GSE0002")
        self.reason = reason

    def __str__(self):
        return _("Degenerate input: {reason}").format(reason=self.reason)
