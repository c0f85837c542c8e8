"""Exceptions and warnings raised by the renormalization pipeline"""

from typing import Optional


class RenormError(Exception):
    """Base error; `invariant` names the invariant that failed"""

    def __init__(self, message: str, invariant: Optional[str] = None):
        super().__init__(message)
        self.invariant = invariant or self.__class__.__name__

    def __str__(self) -> str:
        return f"[{self.invariant}] {self.args[0]}"


class ValidationError(RenormError):
    """An input or configuration violates a documented invariant"""


class DegenerateCritical(ValidationError):
    """A critical point is not simple (|T''(c)| too small)"""


class RootFindingError(RenormError):
    pass


class EmptyOverlap(RenormError):
    pass


class NearSpectrum(RenormError):
    """Spectral parameter too close to the spectrum for a stable resolvent"""


class WindowTooShort(RenormError):
    pass


class InsufficientWindow(WindowTooShort):
    pass


class NonRealRoots(RenormError):
    pass


class NegativeWeight(RenormError):
    pass


class NodeCollision(RenormError):
    pass


class DigitOverflowBeyondPrefix(RenormError):
    pass


class VerificationError(RenormError):
    """A numerical identity exceeded its tolerance"""


class ContractivityWarning(UserWarning):
    """Expansion margin below the contraction hypothesis (min |t_i| / xi < 10)"""
