"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    pass


class InvalidTopologyError(ValueError):
    pass


class EmptySpaceError(ValueError):
    """A set of constraints leaves no feasible labeling."""


class EnumerationCapError(ValueError):
    """Brute-force enumeration was refused because the output space is too large."""

    def __init__(self, size, cap):
        self.size = size
        self.cap = cap
        super().__init__(f"output space has {size} labelings, enumeration cap is {cap}")


class IntegrityError(RuntimeError):
    """A search detected inconsistent bounds or max-marginals."""


class DivergenceError(RuntimeError):
    """An optimizer produced a non-finite iterate or objective."""

    def __init__(self, message, trace=None, iteration=None):
        self.trace = trace
        self.iteration = iteration
        super().__init__(message)


class ConfigError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


class ParseError(InvalidInputError):
    """Malformed input file; the message names the offending line."""
