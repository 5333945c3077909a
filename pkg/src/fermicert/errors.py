"""Exception types shared across the package."""


class SiteNotInLattice(ValueError):
    """A site identifier is not part of the given site set."""


class CertificationError(RuntimeError):
    """A measured quantity exceeded its certified bound.

    Carries the worst offending point as (where, measured, bound).
    """

    def __init__(self, message, where=None, measured=None, bound=None):
        super().__init__(message)
        self.where = where
        self.measured = measured
        self.bound = bound


class AmbiguousKernelError(RuntimeError):
    """Eigenvalues cluster around the kernel tolerance; the kernel cannot
    be identified reliably."""

    def __init__(self, message, eigenvalues=None, tol=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues
        self.tol = tol


class GapClosureError(RuntimeError):
    """The protecting spectral gap dropped below its declared floor along a
    parameter path.  ``location`` is the bisected crossing estimate and
    ``bracket`` the interval that contains it."""

    def __init__(self, message, location=None, bracket=None, gap=None):
        super().__init__(message)
        self.location = location
        self.bracket = bracket
        self.gap = gap


class KernelMismatchError(RuntimeError):
    """ker(H_N) is not contained in the kernel of the shifted target
    Hamiltonian; ``witness`` is a kernel vector violating the inclusion."""

    def __init__(self, message, witness=None, defect=None):
        super().__init__(message)
        self.witness = witness
        self.defect = defect
