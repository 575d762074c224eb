"""
Line-limit profiles: proportional loading and excess-capacity redistribution.
"""
import itertools
import logging
import math
from gettext import gettext as _

import numpy as np

from gridstrain.app.settings import settings
from gridstrain.constants import DIRECTIONS, DIRECTION_CHOICES, INVERSE_V
from gridstrain.exceptions import ParameterError, RedistributionSkipped
from gridstrain.models import LineLimitProfile, ProfileParameters

_logger = logging.getLogger(__name__)


def _floor(zero_flow_floor):
    return settings.ZERO_FLOW_FLOOR if zero_flow_floor is None else zero_flow_floor


def number_label(value):
    """Compact, stable text form of a parameter value for profile ids."""
    if value == INVERSE_V:
        return "invV"
    text = repr(float(value))
    if "e" not in text and "." in text:
        text = text.rstrip("0").rstrip(".")
    return text


def proportional_id(alpha):
    return "prop-a{}".format(number_label(alpha))


def redistributed_id(alpha, p, f, q, direction):
    return "a{}-p{}-f{}-q{}-{}".format(
        number_label(alpha), number_label(p), number_label(f), number_label(q), direction
    )


def effective_flow(base_flow, zero_flow_floor=None):
    """|f| with zero-flow lines lifted to the floor, so every line has a positive reference."""
    return np.maximum(np.abs(base_flow.flows), _floor(zero_flow_floor))


def edge_alpha(profile, base_flow, zero_flow_floor=None):
    """
    Per-line tolerance ``capacity / |flow|``, with the zero-flow floor in the denominator.
    """
    return profile.array / effective_flow(base_flow, zero_flow_floor)


def excess_capacity(profile, base_flow, zero_flow_floor=None):
    """Capacity above the (floored) base flow on each line."""
    return profile.array - effective_flow(base_flow, zero_flow_floor)


def proportional_profile(grid, base_flow, alpha, zero_flow_floor=None):
    """
    Capacity ``alpha * |f|`` on every line.

    Lines whose base flow is zero (below the floor) get ``alpha * floor`` so that they trip on any
    meaningful rerouted flow without being born failed.

    Raises:
        ParameterError: alpha < 1.
    """
    if not alpha >= 1:
        raise ParameterError("alpha", alpha, _("alpha >= 1"))
    capacities = float(alpha) * effective_flow(base_flow, zero_flow_floor)
    return LineLimitProfile(
        profile_id=proportional_id(alpha),
        capacities=capacities,
        parameters=ProfileParameters(kind="proportional", alpha=float(alpha)),
    )


def real_capacity_profile(grid, profile_id="real"):
    """
    Profile made of the line limits read from the grid file.
    """
    if not grid.has_capacities:
        missing = [line.id for line in grid.lines if line.capacity is None]
        raise ParameterError(
            "capacity", None, _("limits on every line, missing {}").format(missing)
        )
    return LineLimitProfile(
        profile_id=profile_id,
        capacities=grid.capacities,
        parameters=ProfileParameters(kind="real"),
    )


def fraction_count(fraction, total):
    """Number of lines a fraction selects: rounded half up, at least one."""
    return max(1, int(math.floor(fraction * total + 0.5)))


def resolve_fraction(value, grid):
    """Turn the ``1/V`` symbol into ``1 / bus count``; numbers pass through."""
    if value == INVERSE_V:
        return 1.0 / grid.n_buses
    return float(value)


def _ranked(excess, line_ids, candidates, largest):
    if largest:
        key = lambda i: (-excess[i], line_ids[i])  # noqa: E731
    else:
        key = lambda i: (excess[i], line_ids[i])  # noqa: E731
    return sorted(candidates, key=key)


def select_donors_recipients(excess, line_ids, p, q, direction):
    """
    Pick donor and recipient line indices.

    Lines are ranked by excess, ties broken by line id. Donors are the ``p`` fraction at one
    extreme; recipients are the ``q`` fraction at the other extreme among the non-donors.
    """
    total = len(excess)
    most = direction == DIRECTIONS.MOST_TO_LEAST
    everyone = range(total)
    donors = _ranked(excess, line_ids, everyone, largest=most)[: fraction_count(p, total)]
    taken = set(donors)
    rest = [i for i in everyone if i not in taken]
    recipients = _ranked(excess, line_ids, rest, largest=not most)[: fraction_count(q, total)]
    return donors, recipients


def redistribute_excess(
    grid,
    profile,
    base_flow,
    p,
    f,
    q,
    direction,
    p_label=None,
    q_label=None,
    zero_flow_floor=None,
):
    """
    Move excess capacity from one extreme of the lines to the other.

    The fraction ``p`` of lines with the most (``most_to_least``) or least (``least_to_most``)
    excess give up the fraction ``f`` of their excess. The removed total goes to the fraction
    ``q`` of lines at the opposite extreme, not already donors, in proportion to their current
    excess (equal shares if they all have none). Total capacity is conserved and no line is left
    at or below its base flow.

    Args:
        grid (PowerGrid): the grid the profile was built on.
        profile (LineLimitProfile): the starting (usually proportional) profile.
        base_flow (FlowSolution): intact-grid flows.
        p (float): donor fraction in (0, 1].
        f (float): removed fraction of donor excess in [0, 1); 0 leaves the profile unchanged.
        q (float): recipient fraction in (0, 1].
        direction (str): one of :data:`gridstrain.constants.DIRECTION_CHOICES`.
        zero_flow_floor (float): base flow used for lines that carry none, defaults to the
            setting.

    Raises:
        ParameterError: a fraction is out of range or the direction is unknown.
        RedistributionSkipped: no recipient remains once donors are excluded.
    """
    for name, value in (("p", p), ("q", q)):
        if not 0 < value <= 1:
            raise ParameterError(name, value, "0 < {} <= 1".format(name))
    if not 0 <= f < 1:
        raise ParameterError("f", f, "0 <= f < 1")
    if direction not in DIRECTION_CHOICES:
        raise ParameterError("direction", direction, " or ".join(DIRECTION_CHOICES))

    alpha = profile.parameters.alpha
    profile_id = redistributed_id(
        alpha, p if p_label is None else p_label, f, q if q_label is None else q_label, direction
    )
    parameters = ProfileParameters(
        kind="redistributed",
        alpha=alpha,
        p=float(p),
        f=float(f),
        q=float(q),
        direction=direction,
        p_label=number_label(p if p_label is None else p_label),
        q_label=number_label(q if q_label is None else q_label),
    )
    capacities = np.array(profile.array)
    if f == 0:
        return LineLimitProfile(profile_id=profile_id, capacities=capacities, parameters=parameters)

    excess = excess_capacity(profile, base_flow, zero_flow_floor)
    donors, recipients = select_donors_recipients(excess, grid.line_ids, p, q, direction)
    if not recipients:
        raise RedistributionSkipped(
            profile_id, _("recipient set is empty once donors are excluded")
        )

    removed = f * excess[donors]
    weights = excess[recipients]
    if np.sum(weights) > 0:
        shares = np.sum(removed) * weights / np.sum(weights)
    else:
        shares = np.full(len(recipients), np.sum(removed) / len(recipients))
    capacities[donors] -= removed
    capacities[recipients] += shares
    return LineLimitProfile(profile_id=profile_id, capacities=capacities, parameters=parameters)


def generate_profile_grid(
    grid,
    base_flow,
    alpha_set,
    p_set,
    f_set,
    q_set,
    include_proportional=False,
    zero_flow_floor=None,
):
    """
    Every combination of (alpha, p, f, q) in both directions.

    Args:
        include_proportional (bool): also emit the plain proportional profile of every alpha,
            ahead of its redistributed variants.

    Returns:
        (list, list): the profiles in canonical order, and a manifest of skipped combinations
        (``{"profile_id", "reason"}`` records).
    """
    for name, values in (("alpha_set", alpha_set), ("p_set", p_set), ("f_set", f_set)):
        if not values:
            raise ParameterError(name, values, _("a nonempty set"))
    if not q_set:
        raise ParameterError("q_set", q_set, _("a nonempty set"))

    profiles = []
    skipped = []
    for alpha in alpha_set:
        base = proportional_profile(grid, base_flow, alpha, zero_flow_floor)
        if include_proportional:
            profiles.append(base)
        for p_spec, f, q_spec, direction in itertools.product(
            p_set, f_set, q_set, DIRECTION_CHOICES
        ):
            try:
                profiles.append(
                    redistribute_excess(
                        grid,
                        base,
                        base_flow,
                        resolve_fraction(p_spec, grid),
                        float(f),
                        resolve_fraction(q_spec, grid),
                        direction,
                        p_label=p_spec,
                        q_label=q_spec,
                        zero_flow_floor=zero_flow_floor,
                    )
                )
            except RedistributionSkipped as exc:
                _logger.warning(str(exc))
                skipped.append({"profile_id": exc.profile_id, "reason": exc.reason})
    if skipped:
        _logger.info(
            _("%(count)d of %(total)d combinations skipped on %(grid)s"),
            {"count": len(skipped), "total": len(skipped) + len(profiles), "grid": grid.name},
        )
    return profiles, skipped
