class BeamTrackError(Exception):
    """Base class for errors raised by beamtrack."""


class DomainError(BeamTrackError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(BeamTrackError, ValueError):
    pass


class DegenerateDirectionError(BeamTrackError, ArithmeticError):
    """The training beams all have a null at the requested angle."""


class InformationDeficitError(BeamTrackError, ArithmeticError):
    """The beam pair carries no angle information at the requested angle."""


class EstimationFailure(BeamTrackError, RuntimeError):
    pass


class SelectionInfeasibleError(BeamTrackError, RuntimeError):
    pass
