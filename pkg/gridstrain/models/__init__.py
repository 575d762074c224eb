from .grid import Bus, Line, PowerGrid  # noqa
from .profile import LineLimitProfile, ProfileParameters  # noqa
from .results import (  # noqa
    AttackCampaignResult,
    AttackRunResult,
    AttackSequence,
    FlowSolution,
    InjectionVector,
    RobustnessSummary,
    SetseEmbedding,
    SpringSystem,
)
from .spatial import RasterField, RasterSpec, VariogramModel  # noqa
