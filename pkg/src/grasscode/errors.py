"""Exception and warning types shared across the package."""


class GrasscodeError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(GrasscodeError):
    """Operands do not share the required (d, p) shape."""


class RankDeficient(GrasscodeError):
    """Input matrix does not carry the requested subspace order."""


class CutLocus(GrasscodeError):
    """Log map undefined: a principal angle reaches pi/2."""


class Singular(GrasscodeError):
    """A linear system is numerically singular."""


class NotPSD(GrasscodeError):
    """A matrix that must be positive semidefinite is not."""


class KernelMismatch(GrasscodeError):
    """Kernel subspaces built with different kernels were combined."""


class AllZeroCode(GrasscodeError):
    """A reconstruction was requested from an all-zero code."""


class ManifestError(GrasscodeError):
    """A dataset manifest is missing files or malformed."""


class ConfigError(GrasscodeError):
    """A run configuration is inconsistent or incomplete."""


class EigenDegenerateWarning(UserWarning):
    """Eigen gap at the cut order is numerically zero; the projected point
    is still optimal but not unique."""


class NotConvergedWarning(UserWarning):
    """An iterative solve hit its iteration cap before reaching tolerance."""
