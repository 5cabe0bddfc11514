"""Exception types raised across the package."""


class BDBError(Exception):
    """Base class for all package errors."""


class InvalidGrid(BDBError, ValueError):
    pass


class Infeasible(BDBError, ValueError):
    """Target moments violate the feasibility cone."""


class NoConvergence(BDBError, RuntimeError):
    pass


class NearSingular(BDBError, ArithmeticError):
    """Moment Jacobian determinant fell below the configured floor."""


class NoRoot(BDBError, ValueError):
    pass


class BranchLost(BDBError, RuntimeError):
    """Continuation of the eigenvalue branch failed at some beta."""


class DegenerateEigenvector(BDBError, ValueError):
    pass


class IncommensurableWavenumber(BDBError, ValueError):
    pass


class Unphysical(BDBError, ValueError):
    """Field leaves the physical range [0, 1/eta]."""


class BlowUp(BDBError, RuntimeError):
    pass


class ProfileInvalid(BDBError, ValueError):
    pass


class ConfigError(BDBError, ValueError):
    pass


class CorruptSnapshot(BDBError, IOError):
    pass


class SaturatedTooFast(BDBError, RuntimeError):
    pass
