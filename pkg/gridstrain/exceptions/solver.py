from gettext import gettext as _

from .base import GridStrainException


class SingularSystemError(GridStrainException):
    """
    Raised when the reduced DC flow matrix of an island cannot be factorized.

    This cannot happen on a connected island with its slack column removed, so it always points at
    an internal inconsistency (or a non-finite susceptance).
    """

    def __init__(self, island, reason):
        super().__init__("GSE0201")
        self.island = island
        self.reason = reason

    def __str__(self):
        return _("DC flow system of island {island} is singular: {reason}").format(
            island=self.island, reason=self.reason
        )


class ConvergenceError(GridStrainException):
    """
    Raised when the spring relaxation does not reach its tolerance after every restart.
    """

    def __init__(self, best_residual, tolerance, iterations, profile_id=None):
        super().__init__("GSE0202")
        self.best_residual = best_residual
        self.tolerance = tolerance
        self.iterations = iterations
        self.profile_id = profile_id

    def __str__(self):
        msg = _(
            "Spring embedding did not converge after {iterations} iterations: best residual "
            "{best} > tolerance {tol}"
        ).format(iterations=self.iterations, best=self.best_residual, tol=self.tolerance)
        if self.profile_id:
            msg = "{} (profile {})".format(msg, self.profile_id)
        return msg


class RedistributionSkipped(GridStrainException):
    """
    Raised when an excess redistribution combination cannot be formed on a grid, e.g. the
    recipient set is empty once the donors are excluded.
    """

    def __init__(self, profile_id, reason):
        super().__init__("GSE0203")
        self.profile_id = profile_id
        self.reason = reason

    def __str__(self):
        return _("Profile {profile_id} skipped: {reason}").format(
            profile_id=self.profile_id, reason=self.reason
        )
