"""Exception hierarchy.

Every error carries the CLI exit code it maps to, so the command line layer
can translate module failures without a lookup table of its own.
"""


class McastleError(Exception):
    exit_code = 1


class ValidationError(McastleError, ValueError):
    exit_code = 2


class FormatError(McastleError, ValueError):
    exit_code = 2


class ConfigError(McastleError, ValueError):
    exit_code = 2


class GridTooSmall(ValidationError):
    pass


class TooFewSamples(ValidationError):
    exit_code = 4


class InsufficientSamples(McastleError):
    exit_code = 4


class ResourceLimit(McastleError):
    exit_code = 4


class GenerationExhausted(McastleError):
    exit_code = 3

    def __init__(self, message, attempts=None):
        super().__init__(message)
        self.attempts = attempts


class NumericError(McastleError, ArithmeticError):
    exit_code = 5


class SingularDesign(NumericError):
    def __init__(self, message, candidates=()):
        super().__init__(message)
        self.candidates = tuple(candidates)


class NonConvergence(NumericError):
    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class DomainError(NumericError, ValueError):
    pass


class ZeroResultant(NumericError):
    pass


class Instability(NumericError):
    pass


class CflViolation(ValidationError):
    pass


class NonFiniteState(NumericError):
    pass
