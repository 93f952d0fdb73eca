"""Exception hierarchy shared by all pllab modules."""


class PLLabError(Exception):
    """Base class for every error raised by pllab."""


class DimensionMismatch(PLLabError, ValueError):
    pass


class NonFiniteValue(PLLabError, ArithmeticError):
    pass


class UnknownCatalogueName(PLLabError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class InvalidParams(PLLabError, ValueError):
    pass


class NoAnalyticDerivative(PLLabError):
    pass


class ExprSyntaxError(PLLabError):
    """Parse failure; ``position`` is a character offset into the source."""

    def __init__(self, position, message):
        self.position = position
        self.message = message
        super().__init__(f"{message} at position {position}")


class UnknownIdentifier(ExprSyntaxError):
    pass


class VariableOutOfRange(ExprSyntaxError):
    pass


class StepSizeUnderflow(PLLabError, ArithmeticError):
    pass


class NotConverged(PLLabError):
    pass


class NoWitnessFound(PLLabError):
    pass


class AllPointsSkipped(PLLabError):
    pass


class InfBelowSamples(PLLabError, ValueError):
    pass


class EmptyArgminModel(PLLabError, ValueError):
    pass


class NoMinimizerFound(PLLabError):
    pass


class RadiusNotFound(PLLabError):
    pass


class KernelEmpty(PLLabError):
    pass


class NonUniqueProjection(PLLabError):
    pass


class ConfigParseError(PLLabError, ValueError):
    pass
