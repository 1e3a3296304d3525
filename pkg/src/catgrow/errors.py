"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateInputError(ValueError):
    """The requested state vanishes identically (e.g. a zero-amplitude odd cat)."""


class NumericalFailure(ArithmeticError):
    """Base class for failures the CLI maps to exit code 2."""


class NumericalSupportError(NumericalFailure):
    """A sample has zero probability under the current state.

    Usually means the Fock truncation is too small for the data.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateHeraldingError(NumericalFailure):
    """Heralding success probability is too small to normalize the output."""


class EnvelopeError(NumericalFailure):
    """The rejection-sampling envelope was found to be violated at runtime."""


class TruncationWarning(UserWarning):
    """A constructed state leaks noticeably past the Fock truncation."""
