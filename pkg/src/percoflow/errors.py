"""Exception hierarchy shared by every module."""


class PercoflowError(Exception):
    """Base class; ``code`` is the machine-readable name used in error JSON."""

    code = "PercoflowError"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        out = {"error": self.code, "message": str(self)}
        out.update({k: v for k, v in self.details.items() if _jsonable(v)})
        return out


def _jsonable(v):
    return isinstance(v, (str, int, float, bool, list, tuple, dict, type(None)))


class MalformedLaw(PercoflowError):
    code = "MalformedLaw"


class HypothesisViolated(UserWarning):
    """Emitted (as a warning) when a law fails the subcritical-zeros hypothesis."""


class RegionTooLarge(PercoflowError):
    code = "RegionTooLarge"


class DegenerateBody(PercoflowError):
    code = "DegenerateBody"


class UnboundedPolytope(PercoflowError):
    code = "UnboundedPolytope"


class EmptyDiscretization(PercoflowError):
    code = "EmptyDiscretization"


class DegenerateCylinder(PercoflowError):
    code = "DegenerateCylinder"


class EmptyCrystal(PercoflowError):
    code = "EmptyCrystal"


class InvalidProblem(PercoflowError):
    code = "InvalidProblem"


class OverflowGuard(PercoflowError):
    code = "OverflowGuard"


class TooLarge(PercoflowError):
    code = "TooLarge"


class NoStabilization(PercoflowError):
    code = "NoStabilization"

    def __init__(self, message, trace=()):
        super().__init__(message, trace=[list(t) for t in trace])
        self.trace = list(trace)


class NotSeparating(PercoflowError):
    code = "NotSeparating"

    def __init__(self, message, witness=()):
        super().__init__(message, witness=[list(map(int, p)) for p in witness])
        self.witness = list(witness)


class MissingDirection(PercoflowError):
    code = "MissingDirection"


class ConfigError(PercoflowError):
    """Aggregates every problem found while parsing a config file."""

    code = "ConfigError"

    def __init__(self, problems):
        self.problems = list(problems)
        msg = "; ".join(p.describe() for p in self.problems)
        super().__init__(msg, problems=[p.to_dict() for p in self.problems])
