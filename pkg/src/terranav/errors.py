"""Exception types raised across the navigation stack."""


class TerraNavError(Exception):
    """Base class for all package errors."""


class DegenerateFitError(TerraNavError):
    """Plane fit requested on fewer than three points or on a collinear set."""


class DegenerateFrameError(TerraNavError):
    """Relative-traversability frame cannot be built (parallel input vectors)."""


class NoFeasibleSampleError(TerraNavError):
    """Rejection sampler hit its iteration cap without accepting a proposal."""


class InvalidEdgeError(TerraNavError):
    """Edge has zero sampling mass and cannot be costed."""


class PlanningFailure(TerraNavError):
    """No path to the goal was found within the planner budget."""

    def __init__(self, message, stats=None, tree=None):
        super().__init__(message)
        self.stats = stats or {}
        self.tree = tree  # partial search tree, if the planner got that far


class SaturatedTerrainError(TerraNavError):
    """Kernel mean traversability reached 1, so the control weight is unbounded."""


class ConfigError(TerraNavError):
    """Configuration is missing fields or violates an ordering constraint."""


class MapFormatError(TerraNavError):
    """Map or point-cloud file could not be parsed."""
