"""Exception hierarchy for the solver."""


class LQMFGError(Exception):
    """Base class for all solver errors."""


class InvalidOperatorError(LQMFGError, ValueError):
    pass


class ResolventError(LQMFGError):
    def __init__(self, n, spectral_abscissa):
        self.n = n
        self.spectral_abscissa = spectral_abscissa
        super().__init__(
            f"nI - A is singular or ill-posed for n={n!r} "
            f"(max real part of spectrum = {spectral_abscissa!r})"
        )


class SpectralError(LQMFGError):
    pass


class SymmetryError(LQMFGError):
    def __init__(self, defect, tol):
        self.defect = defect
        super().__init__(f"operator is not self-adjoint: defect {defect:.3e} > tol {tol:.3e}")


class GridMismatchError(LQMFGError, ValueError):
    pass


class AssumptionError(LQMFGError):
    """Problem data violates a standing assumption required by a solver."""


class DivergenceError(LQMFGError):
    def __init__(self, node, t, norm):
        self.node = node
        self.t = t
        self.norm = norm
        super().__init__(f"solution blew up at node {node} (t={t:.6g}): norm {norm:.3e}")


class PositivityError(LQMFGError):
    def __init__(self, node, t, min_eig):
        self.node = node
        self.t = t
        self.min_eig = min_eig
        super().__init__(f"positivity lost at node {node} (t={t:.6g}): min eigenvalue {min_eig:.3e}")


class CertificateError(LQMFGError):
    """A computed residual certificate exceeded its tolerance."""


class ContractionError(LQMFGError):
    def __init__(self, sweeps, last_diff):
        self.sweeps = sweeps
        self.last_diff = last_diff
        super().__init__(
            f"fixed-point iteration did not contract within {sweeps} sweeps "
            f"(last difference {last_diff:.3e}); interval too long?"
        )


class PreconditionError(LQMFGError):
    pass


class PathologicalInstanceError(LQMFGError):
    pass


class NoCertificateError(LQMFGError):
    """Picard iteration failed without a contraction certificate (C_T >= 1)."""

    def __init__(self, message, last_iterate=None, diffs=None):
        self.last_iterate = last_iterate
        self.diffs = diffs
        super().__init__(message)


class UnsupportedCaseError(LQMFGError):
    pass


class SimulationBlowupError(LQMFGError):
    def __init__(self, path_index, t):
        self.path_index = path_index
        self.t = t
        super().__init__(f"non-finite trajectory: path {path_index} at t={t:.6g}")


class ConfigError(LQMFGError, ValueError):
    pass
