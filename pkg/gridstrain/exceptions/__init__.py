from .base import (  # noqa
    GridStrainException,
    DegenerateDataError,
    exception_to_dict,
)
from .validation import (  # noqa
    GridParseError,
    GridValidationError,
    ManifestError,
    ParameterError,
    TimeSeriesError,
    ValidationError,
)
from .solver import (  # noqa
    ConvergenceError,
    RedistributionSkipped,
    SingularSystemError,
)
