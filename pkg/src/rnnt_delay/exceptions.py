"""Exception types raised across the package."""


class TransducerError(Exception):
    """Base class for all package errors."""


class ZeroProbabilityTarget(TransducerError):
    """The label sequence has zero total probability under the lattice."""


class AllPathsMasked(ZeroProbabilityTarget):
    """Every alignment path was removed by the delay constraint."""


class InstanceTooLarge(TransducerError):
    """Brute-force enumeration requested on a lattice that is too big."""


class ShapeMismatch(TransducerError, ValueError):
    pass


class EmptyInput(TransducerError, ValueError):
    pass


class EmptyReference(TransducerError, ValueError):
    pass


class InvalidSpec(TransducerError, ValueError):
    pass


class ConfigError(TransducerError, ValueError):
    pass


class DivergedLoss(TransducerError, FloatingPointError):
    pass


class ParseError(TransducerError, ValueError):
    """Malformed corpus record; ``lineno`` is 1-based."""

    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)
