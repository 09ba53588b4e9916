"""Exception types raised across felab."""


class FelabError(Exception):
    """Base class for all library errors."""


class SingularTensor(FelabError, ArithmeticError):
    pass


class WeightError(FelabError, ValueError):
    pass


class DegenerateDirection(FelabError, ArithmeticError):
    pass


class ChartError(FelabError, ValueError):
    pass


class BadDomain(FelabError, ValueError):
    pass


class NotActive(FelabError):
    pass


class DomainError(FelabError, ValueError):
    """Evaluation point outside the reference cell."""


class NotInitialized(FelabError, RuntimeError):
    pass


class UpdateFlagError(FelabError, RuntimeError):
    """Requested data that the evaluator was not constructed to compute."""


class NotDistributed(FelabError, RuntimeError):
    pass


class SparsityMiss(FelabError, KeyError):
    pass


class MaxIterations(FelabError, RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class BreakdownError(FelabError, ArithmeticError):
    pass


class ZeroDiagonal(FelabError, ValueError):
    pass


class LengthMismatch(FelabError, ValueError):
    pass


class NotGloballyRefined(FelabError, ValueError):
    pass


class MeshFormatError(FelabError, ValueError):
    pass


class VTKFormatError(FelabError, ValueError):
    pass


class ConfigError(FelabError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
