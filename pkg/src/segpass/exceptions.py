"""Exception and warning types raised by segpass."""


class SegpassError(Exception):
    """Base class for all segpass errors."""


class ConfigError(SegpassError, ValueError):
    """Invalid scenario, experiment spec, or config file entry.

    ``field`` names the offending key when one can be identified.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class DegenerateGeometry(SegpassError, ValueError):
    """A UE coincides with an antenna (zero link distance)."""


class OutOfSegment(SegpassError, ValueError):
    """A pinching antenna lies outside the segment it is attached to."""


class DimensionMismatch(SegpassError, ValueError):
    """Beam and channel shapes do not agree with the protocol."""


class SingularCovariance(SegpassError, ArithmeticError):
    """A receive covariance matrix is numerically singular."""


class InfeasibleRates(SegpassError, ArithmeticError):
    """The per-UE rate targets cannot be met within the power budgets."""


class ComplexRootWarning(UserWarning):
    """The closed-form antenna position has no real stationary point.

    The attenuation along the waveguide dominates everywhere, so the
    gain is monotone in the antenna offset and the optimum sits at the
    feed-side end of the segment.
    """
