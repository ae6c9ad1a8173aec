"""Exception types shared across the package."""


class IsoextError(Exception):
    """Base class for all package errors."""


class ValidationError(IsoextError):
    """Bad input data (configuration, matrix, roof, ...)."""


class NotHyperbolic(ValidationError):
    pass


class KindMismatch(IsoextError):
    pass


class CutLocus(IsoextError):
    """log requested at (or too near) rotation angle pi."""


class NotOnStableLeaf(ValidationError):
    pass


class NotOnUnstableLeaf(ValidationError):
    pass


class NoConvergence(IsoextError):
    pass


class LeafRadiusExceeded(ValidationError):
    pass


class TruncationTooSmall(IsoextError):
    pass


class ConfigMismatch(ValidationError):
    pass


class NotInvariant(ValidationError):
    pass


class ContractViolation(IsoextError):
    """A post-condition or invariant failed at run time."""
