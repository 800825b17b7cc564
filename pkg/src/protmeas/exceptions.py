"""Exception hierarchy for protmeas."""


class ProtmeasError(Exception):
    """Base class for all library errors."""


class QuadratureError(ProtmeasError):
    """A quadrature did not reach its requested tolerance."""


class CancellationLimitError(QuadratureError):
    """The requested transform lies below the double-precision noise floor."""


class UnreliableDerivativeError(ProtmeasError):
    """Finite-difference step halving failed to converge."""


class UndersampledError(ProtmeasError):
    """A spectral curve is too coarse for envelope extraction."""


class ConvergenceRadiusError(ProtmeasError):
    """omega*T lies inside the convergence radius of the 1/(omega*T) expansion."""


class IntegrationError(ProtmeasError):
    """The time integrator failed (step limit or tolerance failure)."""
