"""Problem data for the linear-quadratic mean-field game."""

from __future__ import annotations

import math
from functools import cached_property

import numpy as np

from .errors import AssumptionError, InvalidOperatorError
from .linops import HilbertSpace


def _arr(x, name, shape=None):
    a = np.array(x, dtype=float)
    if a.ndim == 0 and shape is not None and len(shape) == 2:
        a = a.reshape(1, 1)
    if a.ndim == 0 and shape is not None and len(shape) == 1:
        a = a.reshape(1)
    if shape is not None and a.shape != shape:
        raise InvalidOperatorError(f"{name}: expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidOperatorError(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


class MFGProblem:
    """All data of one LQ mean-field game on a truncated state space.

    Parameters
    ----------
    A : (n, n) array
        Generator of the state semigroup.
    B : (n, m) array
        Control operator from R^m (Euclidean) into the state space.
    Q, Qbar, QT, QbarT : (n, n) arrays
        Running and terminal cost weights.
    R : (m, m) array
        Control cost; must be coercive for the solvers to run.
    S, ST : (n, n) arrays
        Mean-field coupling operators.
    sigma : (n, k) array
        Noise coefficient.
    T : float
        Horizon.
    z0 : (n,) array
        Initial population mean.
    affine_c, affine_cT : (n,) arrays, optional
        Running forcing and terminal offset of the r-equation.
    R_eps : float
        Coercivity constant for R.
    space : HilbertSpace, optional
        Weighted state space; Euclidean if omitted.

    Notes
    -----
    Construction only checks shapes and finiteness so that instances
    violating the standing assumptions can still be inspected; the
    solvers call :meth:`validate`.
    """

    def __init__(
        self, A, B, Q, Qbar, QT, QbarT, R, S, ST, sigma, T, z0,
        affine_c=None, affine_cT=None, R_eps: float = 1e-8, space=None,
    ):
        A = np.atleast_2d(np.array(A, dtype=float))
        n = A.shape[0]
        self.space = space if space is not None else HilbertSpace.euclidean(n)
        if self.space.dim != n:
            raise InvalidOperatorError(f"space has dim {self.space.dim}, A has dim {n}")
        sq = (n, n)
        self.A = _arr(A, "A", sq)
        B = np.array(B, dtype=float)
        if B.ndim < 2:
            B = B.reshape(n, -1)
        self.B = _arr(B, "B")
        if self.B.shape[0] != n:
            raise InvalidOperatorError(f"B must have {n} rows, got {self.B.shape}")
        m = self.B.shape[1]
        self.R = _arr(R, "R", (m, m))
        sigma = np.array(sigma, dtype=float)
        if sigma.ndim < 2:
            sigma = sigma.reshape(n, -1)
        self.sigma = _arr(sigma, "sigma")
        if self.sigma.shape[0] != n:
            raise InvalidOperatorError(f"sigma must have {n} rows, got {self.sigma.shape}")
        self.Q = _arr(Q, "Q", sq)
        self.Qbar = _arr(Qbar, "Qbar", sq)
        self.QT = _arr(QT, "QT", sq)
        self.QbarT = _arr(QbarT, "QbarT", sq)
        self.S = _arr(S, "S", sq)
        self.ST = _arr(ST, "ST", sq)
        if not (math.isfinite(T) and T > 0):
            raise InvalidOperatorError("T must be a positive finite number")
        self.T = float(T)
        self.z0 = _arr(np.atleast_1d(z0), "z0", (n,))
        self.affine_c = _arr(np.zeros(n) if affine_c is None else np.atleast_1d(affine_c), "affine_c", (n,))
        self.affine_cT = _arr(
            np.zeros(n) if affine_cT is None else np.atleast_1d(affine_cT), "affine_cT", (n,)
        )
        if not R_eps > 0:
            raise InvalidOperatorError("R_eps must be > 0")
        self.R_eps = float(R_eps)

    _FIELDS = (
        "A", "B", "Q", "Qbar", "QT", "QbarT", "R", "S", "ST", "sigma", "T", "z0",
        "affine_c", "affine_cT", "R_eps", "space",
    )

    def replace(self, **changes) -> "MFGProblem":
        kw = {k: getattr(self, k) for k in self._FIELDS}
        kw.update(changes)
        return MFGProblem(**kw)

    @classmethod
    def scalar(cls, a=0.0, b=1.0, R=1.0, q=1.0, qbar=0.0, qT=1.0, qbarT=0.0, S=0.0, ST=0.0,
               sigma=0.0, T=1.0, z0=1.0, c=0.0, cT=0.0) -> "MFGProblem":
        m = lambda v: [[float(v)]]  # noqa: E731
        return cls(m(a), m(b), m(q), m(qbar), m(qT), m(qbarT), m(R), m(S), m(ST), m(sigma),
                   T, [z0], affine_c=[c], affine_cT=[cT])

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def control_dim(self) -> int:
        return self.B.shape[1]

    @property
    def is_affine(self) -> bool:
        return bool(np.any(self.affine_c != 0) or np.any(self.affine_cT != 0))

    @cached_property
    def A_adj(self):
        return self.space.adjoint(self.A)

    @cached_property
    def B_adj(self):
        return self.space.dual(self.B)

    @cached_property
    def R_inv(self):
        return np.linalg.inv(self.R)

    @cached_property
    def G(self):
        """B R^{-1} B*."""
        return self.B @ self.R_inv @ self.B_adj

    @cached_property
    def Q_sum(self):
        return self.Q + self.Qbar

    @cached_property
    def QT_sum(self):
        return self.QT + self.QbarT

    @cached_property
    def QbarS(self):
        return self.Qbar @ self.S

    @cached_property
    def QbarTST(self):
        return self.QbarT @ self.ST

    @cached_property
    def noise_cov(self):
        """sigma sigma* as an operator on the state space."""
        return self.sigma @ self.space.dual(self.sigma)

    def norm(self, L) -> float:
        return self.space.op_norm(L)

    def validate(self, tol: float = 1e-9) -> None:
        """Raise AssumptionError listing every failed standing assumption."""
        failed = [c for c in standing_assumption_checks(self, tol) if not c[1]]
        if failed:
            desc = "; ".join(f"{name} (measured {val:.3g})" for name, _, val in failed)
            raise AssumptionError(f"standing assumptions violated: {desc}")


def _psd_check(space, L, tol):
    scale = max(1.0, space.op_norm(L))
    defect = space.self_adjoint_defect(L)
    lam = float(np.min(space.eigvalsh(L)))
    return defect <= tol, lam >= -tol * scale, lam, defect


def standing_assumption_checks(problem: MFGProblem, tol: float = 1e-9):
    """List of ``(name, passed, measured_value)`` for items (iii) to (vii)."""
    sp = problem.space
    out = []
    for label, L in (("(iii) Q", problem.Q), ("(iii) Q_T", problem.QT)):
        sym, pos, lam, defect = _psd_check(sp, L, tol)
        out.append((f"{label} self-adjoint PSD", sym and pos, lam if sym else defect))
    for label, L in (("(iv) Qbar", problem.Qbar), ("(iv) Qbar_T", problem.QbarT)):
        defect = sp.self_adjoint_defect(L)
        out.append((f"{label} self-adjoint", defect <= tol, defect))
    for label, L in (("(v) Q+Qbar", problem.Q_sum), ("(v) Q_T+Qbar_T", problem.QT_sum)):
        sym, pos, lam, defect = _psd_check(sp, L, tol)
        out.append((f"{label} PSD", sym and pos, lam if sym else defect))
    R = problem.R
    r_def = float(np.max(np.abs(R - R.T))) / max(1.0, float(np.max(np.abs(R))))
    r_min = float(np.min(np.linalg.eigvalsh(0.5 * (R + R.T))))
    out.append(("(vi) R self-adjoint", r_def <= tol, r_def))
    out.append(("(vi) R coercive (min eig >= R_eps)", r_min >= problem.R_eps, r_min))
    bounded = bool(np.all(np.isfinite(problem.S)) and np.all(np.isfinite(problem.ST)))
    out.append(("(vii) S, S_T bounded", bounded, max(sp.op_norm(problem.S), sp.op_norm(problem.ST))))
    return out
