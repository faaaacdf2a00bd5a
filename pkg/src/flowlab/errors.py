"""Exception types shared across the package."""


class FlowlabError(Exception):
    """Base class for all flowlab errors."""


class EmptyY(FlowlabError):
    """The domain mask contains no Y node."""


class DisconnectedY(FlowlabError):
    """The Y-restricted edge graph is disconnected."""


class InvalidDomain(FlowlabError):
    """A structural domain invariant is violated (e.g. a Y region one cell thick)."""


class Unreachable(FlowlabError):
    """Requested target is not reachable in the active edge graph."""


class RadiusOutOfRange(FlowlabError):
    """Radius outside the admissible range of the comparison profile."""


class CenterTooClose(FlowlabError):
    """An exterior-ball center violates the distance-to-Y condition beyond tolerance."""


class EmptyRegion(FlowlabError):
    """A node predicate selected no nodes."""


class EmptyBand(FlowlabError):
    """No node falls inside the requested potential band."""


class StepCollapse(FlowlabError):
    """Adaptive step halving underflowed without producing a descent step."""


class LeftGrid(FlowlabError):
    """A trajectory exited the grid bounding box."""


class ProjectionFailed(FlowlabError):
    """Gradient descent did not reach the sublevel set within the time budget."""


class SolverDiverged(FlowlabError):
    """An SPD linear solve failed to converge; signals an assembly bug."""


class SizeLimit(FlowlabError):
    """Problem size exceeds the cap of the exact solver."""


class NoConvergence(FlowlabError):
    """Iterative solver hit its iteration cap before reaching tolerance."""


class InvalidDimension(FlowlabError):
    """Dimension parameter outside the admissible range."""


class ConfigInvalid(FlowlabError):
    """Experiment configuration failed validation.

    Carries one message per offending field.
    """

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))
