from gettext import gettext as _

from gridstrain.exceptions import GridStrainException


class ValidationError(GridStrainException):
    """
    A base class for all Validation Errors.
    """

    pass


class GridParseError(ValidationError):
    """
    Raised when a grid file cannot be parsed under its declared format.
    """

    def __init__(self, path, reason, record=None):
        super().__init__("GSE0101")
        self.path = path
        self.reason = reason
        self.record = record

    def __str__(self):
        if self.record is not None:
            msg = _("Could not parse {path} at {record}: {reason}")
            return msg.format(path=self.path, record=self.record, reason=self.reason)
        return _("Could not parse {path}: {reason}").format(path=self.path, reason=self.reason)


class GridValidationError(ValidationError):
    """
    Raised when a parsed grid violates a structural invariant (dangling endpoint, duplicate id,
    nonpositive susceptance, ...).
    """

    def __init__(self, reason, record=None):
        super().__init__("GSE0102")
        self.reason = reason
        self.record = record

    def __str__(self):
        if self.record is not None:
            return _("Invalid grid ({record}): {reason}").format(
                record=self.record, reason=self.reason
            )
        return _("Invalid grid: {reason}").format(reason=self.reason)


class ParameterError(ValidationError):
    """
    Raised when a numeric parameter is outside its admissible range.
    """

    def __init__(self, name, value, expected):
        super().__init__("GSE0103")
        self.name = name
        self.value = value
        self.expected = expected

    def __str__(self):
        return _("Parameter '{name}' has value {value}; expected {expected}.").format(
            name=self.name, value=self.value, expected=self.expected
        )


class ManifestError(ValidationError):
    """
    Raised when an experiment manifest is missing, malformed or inconsistent.
    """

    def __init__(self, reason, path=None):
        super().__init__("GSE0104")
        self.reason = reason
        self.path = path

    def __str__(self):
        if self.path:
            return _("Invalid manifest {path}: {reason}").format(path=self.path, reason=self.reason)
        return _("Invalid manifest: {reason}").format(reason=self.reason)


class TimeSeriesError(ValidationError):
    """
    Raised when a time-series batch references unknown buses or has unordered periods.
    """

    def __init__(self, reason, record=None):
        super().__init__("GSE0105")
        self.reason = reason
        self.record = record

    def __str__(self):
        if self.record is not None:
            return _("Invalid time-series batch at {record}: {reason}").format(
                record=self.record, reason=self.reason
            )
        return _("Invalid time-series batch: {reason}").format(reason=self.reason)
