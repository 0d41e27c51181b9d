"""Finite-dimensional Hilbert-space scaffolding.

Operators are plain ``(dim, dim)`` ndarrays holding the action in
coordinates. The inner product is ``<x, y>_W = sum_i w_i x_i y_i`` with
strictly positive diagonal weights, so the adjoint of ``L`` in coordinates
is ``W^{-1} L^T W`` and operator norms are spectral norms of the similarity
transform ``W^{1/2} L W^{-1/2}``.

Operators between different spaces (control and noise coefficients) map
a Euclidean space ``R^m`` into the weighted space; their adjoint is
``L^T W``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidOperatorError, ResolventError, SpectralError, SymmetryError

SELF_ADJOINT_RTOL = 1e-10


class HilbertSpace:
    """R^dim with a diagonal Gram matrix."""

    def __init__(self, weight):
        w = np.array(weight, dtype=float).ravel()
        if w.size < 1:
            raise InvalidOperatorError("HilbertSpace needs dim >= 1")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InvalidOperatorError("Gram weights must be finite and strictly positive")
        w.setflags(write=False)
        self.weight = w
        self._sqrt = np.sqrt(w)

    @classmethod
    def euclidean(cls, dim: int) -> "HilbertSpace":
        return cls(np.ones(dim))

    @property
    def dim(self) -> int:
        return self.weight.size

    def __eq__(self, other):
        return isinstance(other, HilbertSpace) and np.array_equal(self.weight, other.weight)

    def __hash__(self):
        return hash(self.weight.tobytes())

    def __repr__(self):
        return f"HilbertSpace(dim={self.dim})"

    def inner(self, x, y):
        """<x, y>_W; broadcasts over leading axes."""
        return np.sum(self.weight * np.asarray(x) * np.asarray(y), axis=-1)

    def norm(self, x):
        return np.sqrt(np.maximum(self.inner(x, x), 0.0))

    def similar(self, L):
        """W^{1/2} L W^{-1/2}; the Euclidean representative of ``L``."""
        return self._sqrt[:, None] * np.asarray(L) / self._sqrt[None, :]

    def op_norm(self, L) -> float:
        L = np.asarray(L, dtype=float)
        if L.ndim == 3:
            return float(max((self.op_norm(x) for x in L), default=0.0))
        return float(np.linalg.norm(self.similar(L), 2))

    def adjoint(self, L):
        L = np.asarray(L, dtype=float)
        return (L.swapaxes(-1, -2) * self.weight[..., None, :]) / self.weight[:, None]

    def dual(self, C):
        """Adjoint of ``C: R^m -> H``, i.e. ``C^T W`` (maps H -> R^m)."""
        C = np.asarray(C, dtype=float)
        return C.T * self.weight[None, :]

    def input_norm(self, C) -> float:
        """Norm of ``C: R^m -> H``."""
        return float(np.linalg.norm(self._sqrt[:, None] * np.asarray(C, dtype=float), 2))

    def symmetrize(self, L):
        return 0.5 * (L + self.adjoint(L))

    def self_adjoint_defect(self, L) -> float:
        """||L - L*||_W / max(1, ||L||_W)."""
        L = np.asarray(L, dtype=float)
        return self.op_norm(L - self.adjoint(L)) / max(1.0, self.op_norm(L))

    def eigvalsh(self, L):
        """Eigenvalues of the symmetrized Euclidean form of ``L``."""
        S = self.similar(L)
        return np.linalg.eigvalsh(0.5 * (S + S.swapaxes(-1, -2)))


def _space(space, dim):
    return HilbertSpace.euclidean(dim) if space is None else space


def _check_square(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidOperatorError(f"expected a square operator, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidOperatorError("operator has non-finite entries")
    return A


def mat_exp(A, t: float = 1.0):
    """e^{tA} by scaling and squaring with Pade approximation."""
    A = _check_square(A)
    if t == 0:
        return np.eye(A.shape[0])
    return scipy.linalg.expm(t * A)


def yosida(A, n: float):
    """Yosida approximant ``n^2 (nI - A)^{-1} - nI``."""
    A = _check_square(A)
    dim = A.shape[0]
    try:
        abscissa = float(np.max(np.linalg.eigvals(A).real))
    except np.linalg.LinAlgError as exc:
        raise SpectralError(str(exc)) from exc
    if not n > abscissa:
        raise ResolventError(n, abscissa)
    shifted = n * np.eye(dim) - A
    if np.linalg.cond(shifted) > 1e14:
        raise ResolventError(n, abscissa)
    return n * n * np.linalg.solve(shifted, np.eye(dim)) - n * np.eye(dim)


@dataclass(frozen=True)
class GrowthBound:
    """Constants with ||e^{tA}|| <= M e^{omega t} on a horizon."""

    M: float
    omega: float

    def __post_init__(self):
        if not self.M >= 1.0:
            raise ValueError(f"M must be >= 1, got {self.M}")

    def at(self, t):
        return self.M * np.exp(self.omega * np.asarray(t))


def _exp_norms(A, times, space):
    stack = scipy.linalg.expm(np.asarray(times)[:, None, None] * A[None, :, :])
    S = space.similar(stack)
    return np.linalg.norm(S, 2, axis=(1, 2))


def growth_bound(A, horizon: float, grid_points: int = 1000, space=None) -> GrowthBound:
    """Sampled certificate (M, omega) for the semigroup of ``A`` on [0, horizon].

    omega is the spectral abscissa; M is the largest sampled value of
    ||e^{tA}||_W e^{-omega t}, floored at one.
    """
    A = _check_square(A)
    if horizon <= 0 or grid_points < 2:
        raise ValueError("need horizon > 0 and grid_points >= 2")
    space = _space(space, A.shape[0])
    try:
        omega = float(np.max(np.linalg.eigvals(A).real))
    except np.linalg.LinAlgError as exc:
        raise SpectralError(str(exc)) from exc
    if not np.isfinite(omega):
        raise SpectralError("spectral abscissa is not finite")
    times = np.linspace(0.0, horizon, grid_points)
    ratio = _exp_norms(A, times, space) * np.exp(-omega * times)
    return GrowthBound(M=max(1.0, float(np.max(ratio))), omega=omega)


def semigroup_sup(A, horizon: float, grid_points: int = 1000, space=None) -> float:
    """max(1, sup_{t in [0, horizon]} ||e^{tA}||_W) by dense sampling."""
    A = _check_square(A)
    space = _space(space, A.shape[0])
    times = np.linspace(0.0, horizon, grid_points)
    return max(1.0, float(np.max(_exp_norms(A, times, space))))


def adjoint(L, space=None):
    L = _check_square(L)
    return _space(space, L.shape[0]).adjoint(L)


def is_psd(L, tol: float = 1e-10, space=None):
    """Return ``(ok, min_eigenvalue)`` for a self-adjoint ``L``.

    Raises SymmetryError if ``L`` is not W-self-adjoint within
    ``SELF_ADJOINT_RTOL`` relative to its norm.
    """
    L = _check_square(L)
    space = _space(space, L.shape[0])
    defect = space.self_adjoint_defect(L)
    if defect > SELF_ADJOINT_RTOL:
        raise SymmetryError(defect, SELF_ADJOINT_RTOL)
    lam = float(np.min(space.eigvalsh(L)))
    return lam >= -tol, lam
