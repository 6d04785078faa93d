"""Exception hierarchy shared across the package."""


class SwarmGraphError(Exception):
    """Base class for every error raised by swarmgraph."""


class ConfigError(SwarmGraphError, ValueError):
    """Invalid user-supplied configuration (bad file, bad field, bad value)."""


class DomainError(ConfigError):
    """A numeric or count argument lies outside its allowed domain."""


class UnknownNode(SwarmGraphError, KeyError):
    """An edge or reference names a node that is not part of the graph."""

    def __str__(self) -> str:
        return Exception.__str__(self)


class CycleDetected(SwarmGraphError, ValueError):
    """The edge set does not describe a directed acyclic graph."""


class UnresolvedRoutine(SwarmGraphError):
    """The executor has no handler for a node's routine kind."""


class RoutineFailure(SwarmGraphError):
    """A node routine raised while the graph was executing."""

    def __init__(self, node_id, cause: BaseException):
        self.node_id = node_id
        self.cause = cause
        super().__init__(f"routine of node {node_id} failed: {cause!r}")


class InfeasibleSample(SwarmGraphError, ValueError):
    """An edge mask includes an edge the sequential sampler can never include."""


class LengthMismatch(SwarmGraphError, ValueError):
    pass


class ShapeMismatch(SwarmGraphError, ValueError):
    pass


class ReplayFailure(SwarmGraphError):
    """Re-invoking a node routine on a historical input failed."""


class EstimatorFailure(SwarmGraphError):
    """The utility estimator raised during edge optimization."""

    def __init__(self, iteration: int, sample: int, cause: BaseException):
        self.iteration = iteration
        self.sample = sample
        self.cause = cause
        super().__init__(
            f"utility estimator failed at iteration {iteration}, sample {sample}: {cause!r}"
        )


class ProblemFailure(SwarmGraphError):
    """Graph execution failed while node optimization processed a problem."""

    def __init__(self, index: int, cause: BaseException):
        self.index = index
        self.cause = cause
        super().__init__(f"execution failed on problem {index}: {cause!r}")


class EmptyInput(SwarmGraphError, ValueError):
    pass


class MissingTruth(SwarmGraphError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class AuthMissing(SwarmGraphError):
    pass


class RateLimited(SwarmGraphError):
    pass


class MalformedResponse(SwarmGraphError):
    pass


class TransportError(SwarmGraphError):
    pass
