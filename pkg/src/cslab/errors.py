"""Exception types shared across the package.

Every error raised on a contract violation derives from CslabError so callers
can catch the package's failures in one clause. The CLI maps the subtypes to
exit codes (config 2, missing artifact 3, training divergence 4).
"""


class CslabError(Exception):
    """Base class for all package errors."""


class ShapeError(CslabError):
    """An array argument has an incompatible shape or dtype."""


class ConfigError(CslabError):
    """A configuration value is missing, malformed, or out of range."""


class MissingArtifactError(CslabError):
    """A pipeline stage needs an artifact that no earlier stage produced."""


class TrainingError(CslabError):
    """Training diverged (non-finite loss or gradient)."""


class CheckpointError(CslabError):
    """A checkpoint file is missing its magic header or is corrupt."""


class EpisodeDoneError(CslabError):
    """step() was called on an environment whose episode already ended."""


class PlanningError(CslabError):
    """No plan exists or the replanning budget was exhausted."""


class UnreachableError(PlanningError):
    """No goal node is reachable from the start node."""


class ReplanningError(PlanningError):
    """Execution reached a state the plan graph does not contain."""
