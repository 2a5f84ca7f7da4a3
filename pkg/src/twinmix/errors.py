"""Exception types raised across the package."""


class TwinMixError(Exception):
    """Base class for all package errors."""


class DomainError(TwinMixError, ValueError):
    """A value lies outside the domain of a transform or density."""


class LengthMismatch(TwinMixError, ValueError):
    """A vector does not have the length a mask or layout requires."""


class EmptyDataset(TwinMixError, ValueError):
    pass


class SingularHessian(TwinMixError, ArithmeticError):
    """The Hessian at a putative optimum is not positive definite."""


class StuckChain(TwinMixError, RuntimeError):
    """Too many post-warmup transitions diverged."""


class ChainTooShort(TwinMixError, ValueError):
    pass


class ZeroVariance(ChainTooShort):
    """A chain column is constant, so a variance-based score is undefined."""
