"""Exception types shared across the package."""


class HelilabError(Exception):
    """Base class for all package errors."""


class DomainError(HelilabError, ValueError):
    pass


class ConfigError(HelilabError, ValueError):
    pass


class BarrierInfeasible(HelilabError):
    pass


class TopologyError(HelilabError):
    pass


class ParseError(HelilabError, ValueError):
    pass


class PairingMissing(HelilabError):
    pass


class ConstraintUnsatisfiable(HelilabError):
    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


class Diverged(HelilabError):
    pass


class SingularSystem(HelilabError):
    pass


class NoConvergence(HelilabError):
    pass


class StepTooLarge(HelilabError):
    pass


class PathCollapse(HelilabError):
    pass


class WeldMismatch(HelilabError):
    pass


class NoHandle(HelilabError):
    pass


class SheetAmbiguity(HelilabError):
    pass


class LevelOnVertex(HelilabError):
    pass


class NonTransverse(HelilabError):
    pass
