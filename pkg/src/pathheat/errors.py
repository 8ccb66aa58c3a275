"""Exception taxonomy shared by all modules."""


class PathHeatError(Exception):
    """Base class for all library errors."""


class DomainError(PathHeatError):
    """Inputs live on different manifolds or violate an operation's domain."""


class CutLocusError(DomainError):
    """Geodesic inversion requested at or beyond the cut locus."""


class DeltaViolationError(PathHeatError):
    """A grid increment is not shorter than the path's delta bound."""

    def __init__(self, interval, dist, delta):
        self.interval = interval
        self.dist = dist
        self.delta = delta
        super().__init__(
            f"increment {interval} has length {dist:.6g} >= delta {delta:.6g}"
        )


class AdmissibilityError(PathHeatError):
    """delta fails the curvature smallness conditions required by the drift machinery."""


class UnsupportedFeatureError(PathHeatError):
    """Operation not available for the requested manifold."""


class DegenerateIntervalError(PathHeatError):
    """Boundary matrix of the interval field solver is numerically singular."""


class ProvenanceError(PathHeatError):
    """A stochastic-integral routine was handed data without its driving noise."""


class TuningError(PathHeatError):
    """Sampler auto-tuning failed to reach a usable acceptance rate."""


class ConfigError(PathHeatError):
    """Malformed run configuration."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{message}" + (f" (key: {key})" if key else ""))
