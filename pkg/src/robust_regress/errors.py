"""Exception hierarchy.  ``code`` is the token printed by the CLI."""


class RobustRegressError(Exception):
    code = "error"


class InvalidArgument(RobustRegressError, ValueError):
    code = "invalid-argument"


class StateError(RobustRegressError, RuntimeError):
    code = "state"


class SingularMatrixError(InvalidArgument):
    code = "singular-matrix"


class EstimationFailure(RobustRegressError, RuntimeError):
    code = "estimation-failure"


class PreconditionError(RobustRegressError, ValueError):
    code = "precondition"
